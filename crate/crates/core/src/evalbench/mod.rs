//! Gene-level train/test splits, ranking metrics, label-bias diagnostics,
//! hyperparameter cross-validation and repeated benchmark runs.

mod bench;
mod cv;
mod metrics;
mod split;

pub use bench::{
    fit_sem, repeat_seed, run_benchmark, split_with_both_classes, Aggregate, BenchConfig, BenchModel, Dataset,
    MetricRecord, Metrics, MetricsReport, ModelSpec, SplitKind,
};
pub use cv::{cross_validate, cross_validate_sem, edge_folds, sem_grid, CvOutcome};
pub use metrics::{auprc, average_ranks, hit_at_1pct, mean_sem, pr_curve, recall_at_threshold, spearman};
pub use split::{downsample_negatives, make_split, tf_imbalance, unseen_count, BenchmarkSplit};

use crate::baselines::OneHotLrModel;
use crate::dataio::LabeledEdges;
use crate::error::{Error, Result};

/// Spearman correlation between each TF's one-hot LR coefficient and its
/// positive rate in `train`.
pub fn bias_analysis(lr: &OneHotLrModel, train: &LabeledEdges) -> Result<f64> {
    let imbalance = tf_imbalance(train);
    if imbalance.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "bias analysis needs >= 3 TFs with edges, got {}",
            imbalance.len()
        )));
    }
    let mut coef = Vec::with_capacity(imbalance.len());
    let mut rate = Vec::with_capacity(imbalance.len());
    for (&tf, &r) in &imbalance {
        let c = lr
            .tf_coef
            .get(tf)
            .ok_or(Error::IndexOutOfRange { index: tf, len: lr.tf_coef.len() })?;
        coef.push(*c);
        rate.push(r);
    }
    spearman(&coef, &rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{onehot_lr_train, LrConfig};
    use crate::dataio::Edge;
    use crate::numkit::Rng;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("g{i}")).collect()
    }

    #[test]
    fn spread_rates_correlate_with_coefficients() {
        let mut rng = Rng::seed_from_u64(21);
        let mut edges = vec![];
        let tfs = 10;
        for i in 0..tfs {
            let rate = 0.05 + 0.1 * i as f64;
            for k in tfs..tfs + 60 {
                edges.push(Edge::new(i, k, rng.bernoulli(rate)));
            }
        }
        let e = LabeledEdges::new(names(tfs + 60), edges).unwrap();
        let lr = onehot_lr_train(&e, tfs + 60, &LrConfig::default()).unwrap();
        assert!(bias_analysis(&lr, &e).unwrap() >= 0.9);
    }

    #[test]
    fn constant_imbalance_is_degenerate() {
        let mut edges = vec![];
        for i in 0..4 {
            edges.push(Edge::new(i, 10, true));
            edges.push(Edge::new(i, 11, false));
        }
        let e = LabeledEdges::new(names(12), edges).unwrap();
        let lr = onehot_lr_train(&e, 12, &LrConfig::default()).unwrap();
        assert!(matches!(bias_analysis(&lr, &e), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn varying_rates_never_anticorrelate() {
        for seed in 0..20 {
            let mut rng = Rng::seed_from_u64(seed);
            let mut edges = vec![];
            for i in 0..5 {
                let rate = rng.uniform_range(0.05, 0.95);
                for k in 5..25 {
                    edges.push(Edge::new(i, k, rng.bernoulli(rate)));
                }
            }
            let e = LabeledEdges::new(names(25), edges).unwrap();
            let lr = onehot_lr_train(&e, 25, &LrConfig::default()).unwrap();
            if let Ok(rho) = bias_analysis(&lr, &e) {
                assert!(rho > 0.0, "seed {seed}: {rho}");
            }
        }
    }
}
