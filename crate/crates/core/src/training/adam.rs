use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamVector, SegmentGroup};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for the segments of one parameter group set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    groups: Vec<SegmentGroup>,
}

impl OptState {
    /// Optimizer over the segments of `params` whose group is in `groups`.
    pub fn new(params: &ParamVector, groups: &[SegmentGroup]) -> Self {
        Self {
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            step: 0,
            groups: groups.to_vec(),
        }
    }

    /// Optimizer over every segment.
    pub fn all(params: &ParamVector) -> Self {
        let groups: Vec<SegmentGroup> = params.segments().iter().map(|s| s.group).collect();
        Self::new(params, &groups)
    }

    pub fn covers(&self, group: SegmentGroup) -> bool {
        self.groups.contains(&group)
    }
}

/// One bias-corrected Adam ascent step on the covered segments, followed
/// by re-zeroing the diagonal of every adjacency segment.
pub fn adam_step(
    params: &mut ParamVector,
    grads: &ParamVector,
    opt: &mut OptState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || opt.m.len() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "adam: {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            opt.m.len()
        )));
    }
    if grads.as_slice().iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteValue("gradient".into()));
    }
    opt.step += 1;
    let t = opt.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let segments = params.segments().to_vec();
    let g = grads.as_slice();
    let x = params.as_mut_slice();
    let covered: Vec<_> = segments.iter().filter(|s| opt.covers(s.group)).collect();
    for seg in covered {
        for i in seg.range() {
            opt.m[i] = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * g[i];
            opt.v[i] = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = opt.m[i] / c1;
            let v_hat = opt.v[i] / c2;
            x[i] += lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    for seg in segments.iter().filter(|s| s.group == SegmentGroup::Adjacency) {
        for d in 0..seg.rows.min(seg.cols) {
            x[seg.offset + d * seg.cols + d] = 0.0;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("parameters after optimizer step".into()));
    }
    Ok(())
}
