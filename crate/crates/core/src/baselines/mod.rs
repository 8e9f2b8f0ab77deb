//! Expression-free reference predictors: one-hot logistic regression,
//! low-rank matrix completion and uniform random scores.

mod matcomp;
mod onehot_lr;

pub use matcomp::{default_rank, matcomp_fit, MatCompConfig, MatCompModel};
pub use onehot_lr::{onehot_lr_predict, onehot_lr_scores, onehot_lr_train, LrConfig, OneHotLrModel};

use crate::dataio::LabeledEdges;
use crate::numkit::Rng;

/// One i.i.d. uniform(0,1) score per edge.
pub fn random_scores(edges: &LabeledEdges, seed: u64) -> Vec<f64> {
    let mut rng = Rng::seed_from_u64(seed);
    (0..edges.len()).map(|_| rng.uniform()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Edge;

    #[test]
    fn random_scores_are_seeded() {
        let genes: Vec<String> = (0..4).map(|i| format!("g{i}")).collect();
        let e = LabeledEdges::new(genes, vec![Edge::new(0, 1, true), Edge::new(2, 3, false)]).unwrap();
        assert_eq!(random_scores(&e, 7), random_scores(&e, 7));
        assert_ne!(random_scores(&e, 7), random_scores(&e, 8));
        assert!(random_scores(&e, 7).iter().all(|s| (0.0..1.0).contains(s)));
    }
}
