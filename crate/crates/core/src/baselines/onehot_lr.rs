use serde::{Deserialize, Serialize};

use crate::dataio::LabeledEdges;
use crate::error::{Error, Result};
use crate::numkit::sigmoid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrConfig {
    /// L2 penalty on the gene coefficients (the intercept is unpenalized).
    pub lambda: f64,
    /// Initial step multiplier; halved whenever a step lowers the objective.
    pub lr: f64,
    pub iters: usize,
    pub use_bias: bool,
    /// Stop once the gradient's largest entry falls below this.
    pub tol: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lr: 1.0,
            iters: 5000,
            use_bias: true,
            tol: 1e-6,
        }
    }
}

/// Logistic regression on the concatenated one-hot codes of the TF and the
/// TG, stored as one coefficient vector per role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneHotLrModel {
    pub tf_coef: Vec<f64>,
    pub tg_coef: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    /// Penalized log-likelihood after each accepted iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl OneHotLrModel {
    pub fn zeros(p: usize, lambda: f64) -> Self {
        Self {
            tf_coef: vec![0.0; p],
            tg_coef: vec![0.0; p],
            bias: 0.0,
            lambda,
            objective_trace: Vec::new(),
            converged: false,
        }
    }

    pub fn n_genes(&self) -> usize {
        self.tf_coef.len()
    }

    fn logit(&self, i: usize, k: usize) -> f64 {
        self.tf_coef[i] + self.tg_coef[k] + self.bias
    }

    /// Penalized Bernoulli log-likelihood of `edges`.
    pub fn objective(&self, edges: &LabeledEdges) -> f64 {
        let mut ll = 0.0;
        for e in edges.edges() {
            let z = self.logit(e.tf, e.tg);
            // log σ(z) = -softplus(-z), log(1-σ(z)) = -softplus(z)
            ll -= if e.label {
                crate::numkit::softplus(-z)
            } else {
                crate::numkit::softplus(z)
            };
        }
        let penalty: f64 = self.tf_coef.iter().chain(&self.tg_coef).map(|c| c * c).sum();
        ll - 0.5 * self.lambda * penalty
    }
}

/// Fits by full-batch preconditioned gradient ascent.
///
/// Each row of the design matrix has at most three ones, so
/// `0.75·count + λ` bounds the curvature per coordinate; dividing the
/// gradient by it gives a step that cannot overshoot at `lr = 1`. A step
/// that still lowers the objective is retried at half the size.
pub fn onehot_lr_train(edges: &LabeledEdges, p: usize, cfg: &LrConfig) -> Result<OneHotLrModel> {
    if edges.is_empty() {
        return Err(Error::DegenerateLabels("logistic regression needs at least one edge".into()));
    }
    if !(cfg.lambda >= 0.0 && cfg.lr > 0.0) {
        return Err(Error::InvalidConfig("lambda must be >= 0 and lr > 0".into()));
    }
    if edges.n_genes() != p {
        return Err(Error::DimensionMismatch(format!(
            "edges over {} genes, model over {p}",
            edges.n_genes()
        )));
    }
    let mut tf_count = vec![0.0; p];
    let mut tg_count = vec![0.0; p];
    for e in edges.edges() {
        tf_count[e.tf] += 1.0;
        tg_count[e.tg] += 1.0;
    }
    let n = edges.len() as f64;
    let terms = if cfg.use_bias { 3.0 } else { 2.0 };
    let curv = |count: f64| 0.25 * terms * count + cfg.lambda;

    let mut model = OneHotLrModel::zeros(p, cfg.lambda);
    let mut obj = model.objective(edges);
    let mut lr = cfg.lr;
    let mut g_tf = vec![0.0; p];
    let mut g_tg = vec![0.0; p];
    for _ in 0..cfg.iters {
        g_tf.iter_mut().for_each(|g| *g = 0.0);
        g_tg.iter_mut().for_each(|g| *g = 0.0);
        let mut g_bias = 0.0;
        for e in edges.edges() {
            let r = f64::from(u8::from(e.label)) - sigmoid(model.logit(e.tf, e.tg));
            g_tf[e.tf] += r;
            g_tg[e.tg] += r;
            g_bias += r;
        }
        for i in 0..p {
            g_tf[i] -= cfg.lambda * model.tf_coef[i];
            g_tg[i] -= cfg.lambda * model.tg_coef[i];
        }
        if !cfg.use_bias {
            g_bias = 0.0;
        }
        let gmax = g_tf
            .iter()
            .chain(&g_tg)
            .chain(std::iter::once(&g_bias))
            .fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < cfg.tol {
            model.converged = true;
            break;
        }
        loop {
            let mut cand = model.clone();
            for i in 0..p {
                if tf_count[i] > 0.0 {
                    cand.tf_coef[i] += lr * g_tf[i] / curv(tf_count[i]);
                }
                if tg_count[i] > 0.0 {
                    cand.tg_coef[i] += lr * g_tg[i] / curv(tg_count[i]);
                }
            }
            cand.bias += lr * g_bias / (0.25 * terms * n);
            let cand_obj = cand.objective(edges);
            if cand_obj >= obj {
                model = cand;
                obj = cand_obj;
                break;
            }
            lr *= 0.5;
            if lr < 1e-12 {
                model.converged = true;
                break;
            }
        }
        model.objective_trace.push(obj);
        if model.converged {
            break;
        }
    }
    Ok(model)
}

/// `σ(β_i + γ_k + b)`.
pub fn onehot_lr_predict(model: &OneHotLrModel, i: usize, k: usize) -> Result<f64> {
    let p = model.n_genes();
    for idx in [i, k] {
        if idx >= p {
            return Err(Error::IndexOutOfRange { index: idx, len: p });
        }
    }
    Ok(sigmoid(model.logit(i, k)))
}

/// Predictions for every edge of `edges`, in order.
pub fn onehot_lr_scores(model: &OneHotLrModel, edges: &LabeledEdges) -> Result<Vec<f64>> {
    edges
        .edges()
        .iter()
        .map(|e| onehot_lr_predict(model, e.tf, e.tg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Edge;
    use crate::numkit::Rng;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("g{i}")).collect()
    }

    #[test]
    fn all_positive_tf_predicts_high() {
        let mut edges = vec![];
        for k in 1..6 {
            edges.push(Edge::new(0, k, true));
            edges.push(Edge::new(6, k, false));
        }
        let e = LabeledEdges::new(names(7), edges).unwrap();
        let m = onehot_lr_train(&e, 7, &LrConfig::default()).unwrap();
        assert!(m.tf_coef[0] > 0.0);
        for k in 1..6 {
            assert!(onehot_lr_predict(&m, 0, k).unwrap() > 0.5);
        }
    }

    #[test]
    fn strong_shrinkage_predicts_global_rate() {
        // Every TF and every TG has exactly one positive and one negative.
        let edges = vec![
            Edge::new(0, 2, true),
            Edge::new(0, 3, false),
            Edge::new(1, 2, false),
            Edge::new(1, 3, true),
        ];
        let e = LabeledEdges::new(names(4), edges).unwrap();
        let cfg = LrConfig { lambda: 1e6, ..LrConfig::default() };
        let m = onehot_lr_train(&e, 4, &cfg).unwrap();
        for (i, k) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert!((onehot_lr_predict(&m, i, k).unwrap() - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn objective_never_decreases() {
        let mut rng = Rng::seed_from_u64(3);
        let mut edges = vec![];
        for i in 0..6 {
            let rate = 0.1 + 0.15 * i as f64;
            for k in 6..20 {
                edges.push(Edge::new(i, k, rng.bernoulli(rate)));
            }
        }
        let e = LabeledEdges::new(names(20), edges).unwrap();
        for lambda in [0.0, 0.1, 5.0] {
            let cfg = LrConfig { lambda, lr: 4.0, iters: 300, ..LrConfig::default() };
            let m = onehot_lr_train(&e, 20, &cfg).unwrap();
            for w in m.objective_trace.windows(2) {
                assert!(w[1] >= w[0], "lambda {lambda}: {} then {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn converges_to_stationary_point() {
        let mut rng = Rng::seed_from_u64(5);
        let mut edges = vec![];
        for i in 0..4 {
            for k in 4..12 {
                edges.push(Edge::new(i, k, rng.bernoulli(0.3)));
            }
        }
        let e = LabeledEdges::new(names(12), edges).unwrap();
        let m = onehot_lr_train(&e, 12, &LrConfig::default()).unwrap();
        assert!(m.converged);
    }

    #[test]
    fn prediction_edge_cases() {
        let mut m = OneHotLrModel::zeros(3, 1.0);
        assert_eq!(onehot_lr_predict(&m, 0, 1).unwrap(), 0.5);
        assert!(matches!(onehot_lr_predict(&m, 0, 3), Err(Error::IndexOutOfRange { index: 3, len: 3 })));
        m.bias = 800.0;
        assert_eq!(onehot_lr_predict(&m, 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn unseen_genes_keep_zero_coefficients() {
        let e = LabeledEdges::new(names(5), vec![Edge::new(0, 1, true), Edge::new(0, 2, false)]).unwrap();
        let m = onehot_lr_train(&e, 5, &LrConfig::default()).unwrap();
        assert_eq!(m.tf_coef[3], 0.0);
        assert_eq!(m.tg_coef[4], 0.0);
        assert_eq!(
            onehot_lr_predict(&m, 3, 4).unwrap(),
            sigmoid(m.bias)
        );
    }

    #[test]
    fn empty_edges_are_rejected() {
        assert!(onehot_lr_train(&LabeledEdges::empty(names(2)), 2, &LrConfig::default()).is_err());
    }
}
