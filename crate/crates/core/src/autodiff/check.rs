use serde::Serialize;

use super::{evaluate, gradient, ParamVector, Tape, Var};
use crate::error::{Error, Result};
use crate::numkit::Rng;

/// Above this many coordinates only a seeded subset is perturbed.
pub const MAX_CHECKED_COORDS: usize = 500;

const SUBSET_SEED: u64 = 0x6772_6164;

#[derive(Clone, Debug, Serialize)]
pub struct CoordCheck {
    pub index: usize,
    pub segment: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub coords: Vec<CoordCheck>,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Compares the reverse-mode gradient with central differences.
pub fn finite_diff_check<F>(
    objective: &F,
    at: &ParamVector,
    epsilon: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let (_, analytic) = gradient(objective, at)?;
    let mut coords = Vec::new();
    let mut max_rel_error: f64 = 0.0;
    for i in checked_indices(at) {
        let mut plus = at.clone();
        plus.as_mut_slice()[i] += epsilon;
        let mut minus = at.clone();
        minus.as_mut_slice()[i] -= epsilon;
        let numeric = (evaluate(objective, &plus)? - evaluate(objective, &minus)?) / (2.0 * epsilon);
        if !numeric.is_finite() {
            return Err(Error::NonFiniteValue(format!("central difference at coordinate {i}")));
        }
        let a = analytic.as_slice()[i];
        let rel_error = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        max_rel_error = max_rel_error.max(rel_error);
        coords.push(CoordCheck {
            index: i,
            segment: at.segment_of(i).map(|s| s.name.clone()).unwrap_or_default(),
            analytic: a,
            numeric,
            rel_error,
        });
    }
    Ok(GradCheckReport {
        coords,
        max_rel_error,
        tol,
        passed: max_rel_error <= tol,
    })
}

/// All coordinates, or a seeded subset that includes at least one
/// coordinate from every non-empty segment.
fn checked_indices(at: &ParamVector) -> Vec<usize> {
    let n = at.len();
    if n <= MAX_CHECKED_COORDS {
        return (0..n).collect();
    }
    let mut rng = Rng::seed_from_u64(SUBSET_SEED ^ n as u64);
    let mut chosen = vec![false; n];
    let mut picked = Vec::with_capacity(MAX_CHECKED_COORDS);
    for s in at.segments().iter().filter(|s| !s.is_empty()) {
        let i = s.offset + rng.below(s.len());
        chosen[i] = true;
        picked.push(i);
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
    rng.shuffle(&mut rest);
    let need = MAX_CHECKED_COORDS.saturating_sub(picked.len());
    picked.extend(rest.into_iter().take(need));
    picked.sort_unstable();
    picked
}
