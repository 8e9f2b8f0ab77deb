use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataio::{Edge, LabeledEdges};
use crate::error::{Error, Result};
use crate::models::{BcScore, Variant};
use crate::numkit::Rng;
use crate::training::{ModelConfig, TrainConfig};

use super::bench::{fit_sem, Dataset};
use super::metrics::auprc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome<P> {
    pub best: P,
    pub best_index: usize,
    /// Mean validation AUPRC per grid point; `None` if every fold was skipped.
    pub mean_auprc: Vec<Option<f64>>,
}

/// Assigns each edge to one of `folds` folds after a seeded shuffle.
pub fn edge_folds(edges: &LabeledEdges, folds: usize, seed: u64) -> Result<Vec<(LabeledEdges, LabeledEdges)>> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {folds}")));
    }
    let mut order: Vec<usize> = (0..edges.len()).collect();
    Rng::seed_from_u64(seed).shuffle(&mut order);
    let mut fold_of = vec![0; edges.len()];
    for (pos, &idx) in order.iter().enumerate() {
        fold_of[idx] = pos % folds;
    }
    (0..folds)
        .map(|f| {
            let pick = |want: bool| -> Vec<Edge> {
                edges
                    .edges()
                    .iter()
                    .zip(&fold_of)
                    .filter(|(_, &g)| (g == f) == want)
                    .map(|(e, _)| *e)
                    .collect()
            };
            Ok((edges.with_edges(pick(false))?, edges.with_edges(pick(true))?))
        })
        .collect()
}

/// K-fold grid search over edge pairs. `fit_score` trains on the first
/// edge set and returns one score per edge of the second. Validation
/// folds lacking either class are skipped; the first best grid point wins.
pub fn cross_validate<P, F>(grid: &[P], train: &LabeledEdges, folds: usize, seed: u64, fit_score: F) -> Result<CvOutcome<P>>
where
    P: Clone,
    F: Fn(&P, &LabeledEdges, &LabeledEdges) -> Result<Vec<f64>>,
{
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    let splits = edge_folds(train, folds, seed)?;
    let mut means = Vec::with_capacity(grid.len());
    for point in grid {
        let mut scores = Vec::new();
        for (f, (inner, valid)) in splits.iter().enumerate() {
            if !valid.has_both_classes() {
                warn!("fold {f} has a single label class; skipped");
                continue;
            }
            let s = fit_score(point, inner, valid)?;
            scores.push(auprc(&valid.labels(), &s)?);
        }
        means.push(if scores.is_empty() {
            None
        } else {
            Some(scores.iter().sum::<f64>() / scores.len() as f64)
        });
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in means.iter().enumerate() {
        if let Some(m) = *m {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((i, m));
            }
        }
    }
    let (best_index, _) = best.ok_or_else(|| Error::DegenerateLabels("no validation fold has both classes".into()))?;
    Ok(CvOutcome {
        best: grid[best_index].clone(),
        best_index,
        mean_auprc: means,
    })
}

/// Hyperparameter grid over the prior scales a variant actually uses.
pub fn sem_grid(variant: Variant, base: &ModelConfig, sigma_w: &[f64], sigma_l: &[f64]) -> Vec<ModelConfig> {
    let ws: Vec<f64> = if variant.uses_embeddings() {
        sigma_w.to_vec()
    } else {
        vec![base.prior.sigma_w]
    };
    let ls: Vec<f64> = if variant.uses_labels() {
        sigma_l.to_vec()
    } else {
        vec![base.prior.sigma_l]
    };
    let mut out = Vec::new();
    for &w in &ws {
        for &l in &ls {
            let mut cfg = base.clone();
            cfg.prior.sigma_w = w;
            cfg.prior.sigma_l = l;
            out.push(cfg);
        }
    }
    out
}

/// [`cross_validate`] for one of the variational models.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate_sem(
    variant: Variant,
    grid: &[ModelConfig],
    train_cfg: &TrainConfig,
    score: BcScore,
    data: &Dataset,
    train: &LabeledEdges,
    folds: usize,
    seed: u64,
) -> Result<CvOutcome<ModelConfig>> {
    cross_validate(grid, train, folds, seed, |cfg, inner, valid| {
        let y = variant.uses_labels().then_some(inner);
        let scores = fit_sem(variant, cfg, train_cfg, score, 1, data, y, seed)?;
        Ok(valid.gather(&scores))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("g{i}")).collect()
    }

    fn edges() -> LabeledEdges {
        let mut rng = Rng::seed_from_u64(1);
        let mut e = vec![];
        for i in 0..5 {
            for k in 5..15 {
                e.push(Edge::new(i, k, rng.bernoulli(0.4)));
            }
        }
        LabeledEdges::new(names(15), e).unwrap()
    }

    #[test]
    fn folds_partition_edges() {
        let e = edges();
        let f = edge_folds(&e, 3, 2).unwrap();
        let total: usize = f.iter().map(|(_, v)| v.len()).sum();
        assert_eq!(total, e.len());
        for (inner, valid) in &f {
            assert_eq!(inner.len() + valid.len(), e.len());
        }
    }

    #[test]
    fn single_point_grid_returns_it() {
        let e = edges();
        let out = cross_validate(&[7u32], &e, 3, 0, |_, _, v| Ok(vec![0.0; v.len()])).unwrap();
        assert_eq!(out.best, 7);
        assert_eq!(out.best_index, 0);
    }

    #[test]
    fn best_point_wins_and_ties_go_first() {
        let e = edges();
        // Point 1 scores with the true labels, points 0 and 2 are constant.
        let out = cross_validate(&[0u8, 1, 2, 1], &e, 3, 0, |p, _, v| {
            Ok(v.edges()
                .iter()
                .map(|x| if *p == 1 { f64::from(u8::from(x.label)) } else { 0.0 })
                .collect())
        })
        .unwrap();
        assert_eq!(out.best_index, 1);
        assert_eq!(out.mean_auprc[1], Some(1.0));
    }

    #[test]
    fn degenerate_folds_are_skipped() {
        // Only one positive: at most one validation fold has both classes.
        let mut e = vec![Edge::new(0, 5, true)];
        for k in 6..12 {
            e.push(Edge::new(0, k, false));
        }
        let e = LabeledEdges::new(names(12), e).unwrap();
        let calls = std::cell::Cell::new(0);
        let out = cross_validate(&[()], &e, 3, 4, |_, _, v| {
            calls.set(calls.get() + 1);
            Ok(vec![0.5; v.len()])
        })
        .unwrap();
        assert_eq!(calls.get(), 1);
        assert!(out.mean_auprc[0].is_some());
    }

    #[test]
    fn grid_follows_variant() {
        let base = ModelConfig::default();
        assert_eq!(sem_grid(Variant::DeepSem, &base, &[0.1, 1.0], &[0.1]).len(), 1);
        assert_eq!(sem_grid(Variant::InfoSemB, &base, &[0.1, 1.0, 10.0, 100.0], &[0.1, 0.3]).len(), 4);
        assert_eq!(sem_grid(Variant::InfoSemBc, &base, &[0.1, 1.0, 10.0, 100.0], &[0.1, 0.3]).len(), 8);
    }
}
