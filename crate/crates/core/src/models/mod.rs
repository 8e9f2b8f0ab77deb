//! Linear-SEM variational autoencoders: DeepSEM and the InfoSEM variants
//! with embedding-informed and label-informed adjacency priors.

mod graph;
mod mlp;
mod ops;
mod state;

pub use graph::{ElboObjective, ElboTerms};
pub use mlp::{Dense, MlpParams, MlpVars, SCALE_FLOOR};
pub use ops::{
    adjacency_prior, adjacency_prior_deepsem, adjacency_prior_infosem_b, compose_adjacency, decode, edge_scores,
    edge_scores_with, elbo, embedding_prior_mean, encode, kl_monte_carlo, kl_term, label_prior,
    latent_noise, mixing_matrix, reconstruction_term, reparam_sample, weight_prior, BcScore,
    MonteCarloEstimate,
};
pub use state::{EmbeddingPrior, LowRankLogits, ModelState, PriorConfig, Variant};

/// `logit(0.95)`, the prior mode for a known interaction.
pub fn logit_hi() -> f64 {
    19f64.ln()
}

/// `logit(0.05)`, the prior mode for a known non-interaction.
pub fn logit_lo() -> f64 {
    -(19f64.ln())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::numkit::{normal_matrix, Matrix, Rng};

    /// Small random state with every field of `variant` populated.
    pub fn sample_state(variant: Variant, seed: u64) -> ModelState {
        sized_state(variant, seed, 4, 3, 2)
    }

    pub fn sized_state(variant: Variant, seed: u64, p: usize, d: usize, h: usize) -> ModelState {
        let mut rng = Rng::seed_from_u64(seed);
        let mut adjacency = normal_matrix(&mut rng, p, p, 0.3);
        adjacency.zero_diagonal();
        let logits = (variant == Variant::InfoSemBc).then(|| LowRankLogits {
            a: normal_matrix(&mut rng, p, h, 1.0),
            b: normal_matrix(&mut rng, h, p, 1.0),
        });
        let embedding = variant.uses_embeddings().then(|| EmbeddingPrior {
            h: normal_matrix(&mut rng, p, d, 1.0),
            w: normal_matrix(&mut rng, 1, 2 * d, 0.3),
        });
        ModelState {
            variant,
            adjacency,
            logits,
            embedding,
            encoder: MlpParams::random(&[5], &mut rng),
            decoder: MlpParams::random(&[5], &mut rng),
            prior: PriorConfig {
                rank_h: h,
                ..PriorConfig::default()
            },
            regulators: None,
        }
    }

    /// Constant encoder `N(0, 1)` and decoder `N(0, 1)` over `p` genes with
    /// zero adjacency, as used by the hand-computed ELBO examples.
    pub fn stub_state(variant: Variant, p: usize, d: usize) -> ModelState {
        ModelState {
            variant,
            adjacency: Matrix::zeros(p, p),
            logits: (variant == Variant::InfoSemBc).then(|| LowRankLogits {
                a: Matrix::zeros(p, 1),
                b: Matrix::zeros(1, p),
            }),
            embedding: variant
                .uses_embeddings()
                .then(|| EmbeddingPrior::new(Matrix::filled(p, d, 0.7))),
            encoder: MlpParams::constant(0.0, 1.0),
            decoder: MlpParams::constant(0.0, 1.0),
            prior: PriorConfig {
                sigma_a: 0.5,
                sigma_z: 1.0,
                sigma_w: 1.0,
                beta: 1.0,
                rank_h: 1,
                ..PriorConfig::default()
            },
            regulators: None,
        }
    }
}

#[cfg(test)]
mod tests;
