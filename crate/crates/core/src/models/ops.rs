//! Value-level model operations.
//!
//! These are direct matrix computations, kept separate from the tape
//! builders in `graph` so each can check the other.

use serde::{Deserialize, Serialize};

use super::graph::ElboObjective;
use super::mlp::MlpParams;
use super::state::{EmbeddingPrior, LowRankLogits, ModelState, Variant};
use super::{logit_hi, logit_lo};
use crate::dataio::LabeledEdges;
use crate::error::{Error, Result};
use crate::numkit::{gaussian_logpdf, laplace_logpdf, lu_factor, normal_matrix, sigmoid, Matrix, Rng};

/// `M = I − Aᵀ`.
pub fn mixing_matrix(adj: &Matrix) -> Result<Matrix> {
    if !adj.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "adjacency must be square, got {}x{}",
            adj.rows(),
            adj.cols()
        )));
    }
    Matrix::identity(adj.rows()).sub(&adj.transpose())
}

/// Entrywise means and standard deviations of the encoder posterior.
pub fn encode(x: &Matrix, enc: &MlpParams) -> Result<(Matrix, Matrix)> {
    enc.forward(x)
}

/// `Ẑ = μ + s ⊙ ε`; returns the sample and the noise `ε` used.
pub fn reparam_sample(mu: &Matrix, std: &Matrix, rng: &mut Rng) -> Result<(Matrix, Matrix)> {
    mu.check_same_shape(std, "posterior mean and std")?;
    let eps = normal_matrix(rng, mu.rows(), mu.cols(), 1.0);
    let z = mu.add(&std.hadamard(&eps)?)?;
    Ok((z, eps))
}

/// `Z = M·Ẑ`.
pub fn latent_noise(z_hat: &Matrix, adj: &Matrix) -> Result<Matrix> {
    mixing_matrix(adj)?.matmul(z_hat)
}

/// Entrywise decoder mean and variance.
pub fn decode(z_hat: &Matrix, dec: &MlpParams) -> Result<(Matrix, Matrix)> {
    dec.forward(z_hat)
}

/// `Σ_ij log N(x_ij; mean_ij, var_ij)` with the decoder applied to `z_hat`.
pub fn reconstruction_term(x: &Matrix, z_hat: &Matrix, dec: &MlpParams) -> Result<f64> {
    x.check_same_shape(z_hat, "expression and latent sample")?;
    let (mean, var) = decode(z_hat, dec)?;
    let mut total = 0.0;
    for ((&xi, &m), &v) in x.as_slice().iter().zip(mean.as_slice()).zip(var.as_slice()) {
        total += gaussian_logpdf(xi, m, v.sqrt())?;
    }
    Ok(total)
}

/// Closed-form `Σ_j KL[N(Mμ_j, M diag(s_j²) Mᵀ) ‖ N(0, σ_z² I)]`.
pub fn kl_term(mu: &Matrix, std: &Matrix, adj: &Matrix, sigma_z: f64) -> Result<f64> {
    mu.check_same_shape(std, "posterior mean and std")?;
    if !(sigma_z > 0.0) {
        return Err(Error::InvalidScale(sigma_z));
    }
    let m = mixing_matrix(adj)?;
    let (p, n) = mu.shape();
    if m.rows() != p {
        return Err(Error::DimensionMismatch("adjacency and posterior disagree on P".into()));
    }
    let log_det = lu_factor(&m)?.log_abs_det();
    let col_norm: Vec<f64> = (0..p)
        .map(|i| (0..p).map(|r| m[(r, i)] * m[(r, i)]).sum())
        .collect();
    let m_mu = m.matmul(mu)?;
    let s2z = sigma_z * sigma_z;
    let mut total = 0.0;
    for j in 0..n {
        let mut trace = 0.0;
        let mut log_s2 = 0.0;
        let mut mean_sq = 0.0;
        for i in 0..p {
            let s2 = std[(i, j)] * std[(i, j)];
            trace += s2 * col_norm[i];
            log_s2 += s2.ln();
            mean_sq += m_mu[(i, j)] * m_mu[(i, j)];
        }
        total += 0.5
            * ((trace + mean_sq) / s2z - p as f64 + p as f64 * s2z.ln() - 2.0 * log_det - log_s2);
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Sampling estimate of [`kl_term`]: the average over draws of
/// `log q(Ẑ) − ln|det M| − log p(MẐ)`.
pub fn kl_monte_carlo(
    mu: &Matrix,
    std: &Matrix,
    adj: &Matrix,
    sigma_z: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<MonteCarloEstimate> {
    mu.check_same_shape(std, "posterior mean and std")?;
    if samples < 2 {
        return Err(Error::InvalidConfig("Monte Carlo KL needs at least two samples".into()));
    }
    let m = mixing_matrix(adj)?;
    let log_det = lu_factor(&m)?.log_abs_det();
    let (p, n) = mu.shape();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut z_hat = Matrix::zeros(p, n);
    for _ in 0..samples {
        let mut log_q = 0.0;
        for i in 0..p {
            for j in 0..n {
                let e = rng.normal();
                let s = std[(i, j)];
                z_hat[(i, j)] = mu[(i, j)] + s * e;
                log_q += gaussian_logpdf(z_hat[(i, j)], mu[(i, j)], s)?;
            }
        }
        let z = m.matmul(&z_hat)?;
        let mut log_p = 0.0;
        for &v in z.as_slice() {
            log_p += gaussian_logpdf(v, 0.0, sigma_z)?;
        }
        let draw = log_q - n as f64 * log_det - log_p;
        sum += draw;
        sum_sq += draw * draw;
    }
    let k = samples as f64;
    let mean = sum / k;
    let var = ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0);
    Ok(MonteCarloEstimate {
        mean,
        std_error: (var / k).sqrt(),
        samples,
    })
}

/// `Σ_{i≠k} log Laplace(a_ik; 0, σ_a)`.
pub fn adjacency_prior_deepsem(adj: &Matrix, sigma_a: f64) -> Result<f64> {
    laplace_off_diagonal(adj, None, None, sigma_a)
}

/// `m_ik = [h_i, h_k]·wᵀ`, zero on the diagonal.
pub fn embedding_prior_mean(ep: &EmbeddingPrior) -> Result<Matrix> {
    let (p, d) = ep.h.shape();
    if ep.w.len() != 2 * d {
        return Err(Error::DimensionMismatch(format!(
            "w has {} entries, embeddings need {}",
            ep.w.len(),
            2 * d
        )));
    }
    let w = ep.w.as_slice();
    let left: Vec<f64> = (0..p)
        .map(|i| ep.h.row(i).iter().zip(&w[..d]).map(|(a, b)| a * b).sum())
        .collect();
    let right: Vec<f64> = (0..p)
        .map(|k| ep.h.row(k).iter().zip(&w[d..]).map(|(a, b)| a * b).sum())
        .collect();
    let mut m = Matrix::zeros(p, p);
    for i in 0..p {
        for k in 0..p {
            if i != k {
                m[(i, k)] = left[i] + right[k];
            }
        }
    }
    Ok(m)
}

/// `Σ_{i≠k} log Laplace(a_ik; m_ik, σ_a)` with `m` from the embeddings.
pub fn adjacency_prior_infosem_b(adj: &Matrix, ep: &EmbeddingPrior, sigma_a: f64) -> Result<f64> {
    let m = embedding_prior_mean(ep)?;
    laplace_off_diagonal(adj, Some(&m), None, sigma_a)
}

/// The adjacency prior of `state` over its free entries: the embedding
/// prior when present, the zero-mean Laplace prior otherwise.
pub fn adjacency_prior(state: &ModelState) -> Result<f64> {
    let m = state.embedding.as_ref().map(embedding_prior_mean).transpose()?;
    laplace_off_diagonal(&state.adjacency, m.as_ref(), state.regulators.as_deref(), state.prior.sigma_a)
}

fn laplace_off_diagonal(adj: &Matrix, loc: Option<&Matrix>, regulators: Option<&[bool]>, sigma_a: f64) -> Result<f64> {
    if !adj.is_square() {
        return Err(Error::DimensionMismatch("adjacency must be square".into()));
    }
    if let Some(m) = loc {
        adj.check_same_shape(m, "adjacency and prior mean")?;
    }
    let p = adj.rows();
    let mut total = 0.0;
    for i in 0..p {
        if regulators.is_some_and(|r| !r[i]) {
            continue;
        }
        for k in 0..p {
            if i != k {
                let l = loc.map_or(0.0, |m| m[(i, k)]);
                total += laplace_logpdf(adj[(i, k)], l, sigma_a)?;
            }
        }
    }
    Ok(total)
}

/// `Σ_j log N(w_j; 0, σ_w²)`.
pub fn weight_prior(w: &Matrix, sigma_w: f64) -> Result<f64> {
    w.as_slice()
        .iter()
        .map(|&v| gaussian_logpdf(v, 0.0, sigma_w))
        .sum()
}

/// `Aᵉ ⊙ σ(Aˡₐ Aˡ_b)` with the diagonal masked.
pub fn compose_adjacency(effect: &Matrix, logits: &LowRankLogits) -> Result<Matrix> {
    let gate = logits.product()?.map(sigmoid);
    let mut a = effect.hadamard(&gate)?;
    a.zero_diagonal();
    Ok(a)
}

/// Gaussian prior on observed logits, centred at `±ln 19`. Unobserved
/// entries contribute nothing.
pub fn label_prior(logits: &LowRankLogits, y: &LabeledEdges, sigma_l: f64) -> Result<f64> {
    if !(sigma_l > 0.0) {
        return Err(Error::InvalidScale(sigma_l));
    }
    if y.is_empty() {
        return Ok(0.0);
    }
    let l = logits.product()?;
    if y.n_genes() != l.rows() {
        return Err(Error::DimensionMismatch("labels and logits disagree on P".into()));
    }
    let mut total = 0.0;
    for e in y.edges() {
        let mode = if e.label { logit_hi() } else { logit_lo() };
        total += gaussian_logpdf(l[(e.tf, e.tg)], mode, sigma_l)?;
    }
    Ok(total)
}

/// Single-sample ELBO of `state` on all cells of `x`.
pub fn elbo(state: &ModelState, x: &Matrix, y: Option<&LabeledEdges>, rng: &mut Rng) -> Result<f64> {
    let obj = ElboObjective::sampled(state, x.clone(), 1, 1.0, y, rng)?;
    Ok(obj.terms(state)?.elbo)
}

/// Which matrix ranks InfoSEM-BC edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcScore {
    /// `σ(aˡ_ik)`, an interaction probability.
    #[default]
    Logit,
    /// `|a_ik|` of the composed adjacency.
    Composed,
    /// `|aᵉ_ik|` of the effect matrix.
    Effect,
}

impl std::str::FromStr for BcScore {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(BcScore::Logit),
            "composed" => Ok(BcScore::Composed),
            "effect" => Ok(BcScore::Effect),
            other => Err(Error::InvalidConfig(format!("unknown score mode {other:?}"))),
        }
    }
}

/// Edge ranking scores with the default InfoSEM-BC convention.
pub fn edge_scores(state: &ModelState) -> Result<Matrix> {
    edge_scores_with(state, BcScore::default())
}

/// `|ã_ik|` for DeepSEM and InfoSEM-B; the chosen [`BcScore`] for
/// InfoSEM-BC. Diagonal entries are `-inf`.
pub fn edge_scores_with(state: &ModelState, mode: BcScore) -> Result<Matrix> {
    let mut s = match (state.variant, mode) {
        (Variant::InfoSemBc, BcScore::Logit) => {
            let l = state
                .logits
                .as_ref()
                .ok_or_else(|| Error::MissingInput("low-rank logits".into()))?;
            l.product()?.map(sigmoid)
        }
        (Variant::InfoSemBc, BcScore::Composed) => {
            let l = state
                .logits
                .as_ref()
                .ok_or_else(|| Error::MissingInput("low-rank logits".into()))?;
            compose_adjacency(&state.adjacency, l)?.map(f64::abs)
        }
        _ => state.adjacency.map(f64::abs),
    };
    for i in 0..s.rows() {
        s[(i, i)] = f64::NEG_INFINITY;
    }
    Ok(s)
}
