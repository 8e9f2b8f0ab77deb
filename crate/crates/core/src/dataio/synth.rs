use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{lu_factor, normal_matrix, Matrix, Rng};

use super::types::{Edge, EmbeddingMatrix, ExpressionMatrix, LabeledEdges};

/// Largest spectral radius allowed for a generated adjacency.
pub const SPECTRAL_CAP: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub p: usize,
    pub n: usize,
    pub n_tfs: usize,
    pub edges_per_tf: usize,
    /// Embedding dimension.
    pub dim: usize,
    /// Probability that a TF takes the targets with the largest `|m_ik|`
    /// (effect signs following `m_ik`) rather than uniform ones.
    pub rho: f64,
    pub sigma_z: f64,
    /// Range of effect magnitudes.
    pub effect_lo: f64,
    pub effect_hi: f64,
    /// Probability that an effect of a uniformly wired TF is negative.
    pub negative_fraction: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            p: 20,
            n: 1000,
            n_tfs: 3,
            edges_per_tf: 3,
            dim: 8,
            rho: 1.0,
            sigma_z: 1.0,
            effect_lo: 0.5,
            effect_hi: 1.0,
            negative_fraction: 0.5,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.p < 2 || self.n < 1 || self.dim < 1 {
            return fail(format!("need p >= 2, n >= 1, dim >= 1 (got {}, {}, {})", self.p, self.n, self.dim));
        }
        if self.n_tfs < 1 || self.n_tfs > self.p {
            return fail(format!("n_tfs must be in 1..={}, got {}", self.p, self.n_tfs));
        }
        if self.edges_per_tf > self.p - 1 {
            return fail(format!("edges_per_tf must be <= {}, got {}", self.p - 1, self.edges_per_tf));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return fail(format!("rho must be in [0, 1], got {}", self.rho));
        }
        if !(0.0..=1.0).contains(&self.negative_fraction) {
            return fail(format!("negative_fraction must be in [0, 1], got {}", self.negative_fraction));
        }
        if !(self.sigma_z > 0.0 && self.sigma_z.is_finite()) {
            return fail(format!("sigma_z must be positive, got {}", self.sigma_z));
        }
        if !(0.0 <= self.effect_lo && self.effect_lo <= self.effect_hi && self.effect_hi.is_finite()) {
            return fail(format!("need 0 <= effect_lo <= effect_hi, got [{}, {}]", self.effect_lo, self.effect_hi));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub expression: ExpressionMatrix,
    /// True weighted adjacency, `a[(i, k)]` the effect of gene i on gene k.
    pub adjacency: Matrix,
    /// Complete TF x gene grid (self pairs excluded).
    pub labels: LabeledEdges,
    pub embeddings: EmbeddingMatrix,
    /// Hidden `1 x 2d` weights behind the embedding scores.
    pub w_star: Matrix,
    pub config: GenConfig,
}

/// Gene symbols used by the generator: TFs first.
pub fn synthetic_gene_names(p: usize, n_tfs: usize) -> Vec<String> {
    (0..p)
        .map(|i| if i < n_tfs { format!("TF{:02}", i + 1) } else { format!("G{:03}", i + 1) })
        .collect()
}

/// Upper bound on the spectral radius of a square matrix:
/// `min_k ||B^k||_F^(1/k)` over the first 32 powers.
pub fn spectral_radius_bound(b: &Matrix) -> Result<f64> {
    let mut power = b.clone();
    let mut best = b.frobenius_norm();
    for k in 2..=32 {
        power = power.matmul(b)?;
        let norm = power.frobenius_norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        best = best.min(norm.powf(1.0 / k as f64));
    }
    Ok(best)
}

/// `[h_i, h_k] · w★ᵀ` for every pair.
pub fn embedding_scores(h: &Matrix, w_star: &Matrix) -> Matrix {
    let (p, d) = h.shape();
    let w = w_star.as_slice();
    let left: Vec<f64> = (0..p).map(|i| h.row(i).iter().zip(&w[..d]).map(|(a, b)| a * b).sum()).collect();
    let right: Vec<f64> = (0..p).map(|k| h.row(k).iter().zip(&w[d..]).map(|(a, b)| a * b).sum()).collect();
    let mut m = Matrix::zeros(p, p);
    for i in 0..p {
        for k in 0..p {
            m[(i, k)] = left[i] + right[k];
        }
    }
    m
}

/// Samples a linear-SEM dataset whose TF targets follow the embedding
/// scores `m = embedding_scores(h, w★)` with probability `rho` per TF.
pub fn generate_synthetic(cfg: &GenConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let (p, t, d) = (cfg.p, cfg.n_tfs, cfg.dim);
    let mut emb_rng = Rng::derive(cfg.seed, 0);
    let mut graph_rng = Rng::derive(cfg.seed, 1);
    let mut noise_rng = Rng::derive(cfg.seed, 2);

    let h = normal_matrix(&mut emb_rng, p, d, 1.0);
    // The TF half of w★ only shifts a TF's scores uniformly, so it is zero.
    let mut w_star = Matrix::zeros(1, 2 * d);
    for j in 0..d {
        w_star.as_mut_slice()[d + j] = emb_rng.normal();
    }
    let m = embedding_scores(&h, &w_star);

    let mut a = Matrix::zeros(p, p);
    for i in 0..t {
        let mut candidates: Vec<usize> = (0..p).filter(|&k| k != i).collect();
        let aligned = graph_rng.bernoulli(cfg.rho);
        if aligned {
            candidates.sort_by(|&x, &y| m[(i, y)].abs().total_cmp(&m[(i, x)].abs()).then(x.cmp(&y)));
        } else {
            graph_rng.shuffle(&mut candidates);
        }
        for &k in &candidates[..cfg.edges_per_tf] {
            let mag = graph_rng.uniform_range(cfg.effect_lo, cfg.effect_hi);
            let negative = if aligned {
                m[(i, k)] < 0.0
            } else {
                graph_rng.bernoulli(cfg.negative_fraction)
            };
            a[(i, k)] = if negative { -mag } else { mag };
        }
    }
    // Only TF rows are non-zero, so the spectrum is that of the TF block.
    let mut block = Matrix::zeros(t, t);
    for i in 0..t {
        for k in 0..t {
            block[(i, k)] = a[(i, k)];
        }
    }
    let bound = spectral_radius_bound(&block)?;
    if bound > SPECTRAL_CAP {
        a = a.scale(SPECTRAL_CAP / bound);
    }

    let z = normal_matrix(&mut noise_rng, p, cfg.n, cfg.sigma_z);
    let x = if a.max_abs() == 0.0 {
        z
    } else {
        let mix = Matrix::identity(p).sub(&a.transpose())?;
        lu_factor(&mix)?.solve(&z)?
    };

    let genes = synthetic_gene_names(p, t);
    let is_tf: Vec<bool> = (0..p).map(|i| i < t).collect();
    let cells: Vec<String> = (0..cfg.n).map(|j| format!("c{:05}", j + 1)).collect();
    let mut edges = Vec::with_capacity(t * (p - 1));
    for i in 0..t {
        for k in 0..p {
            if k != i {
                edges.push(Edge::new(i, k, a[(i, k)] != 0.0));
            }
        }
    }
    Ok(SyntheticDataset {
        expression: ExpressionMatrix::new(genes.clone(), is_tf, cells, x)?,
        adjacency: a,
        labels: LabeledEdges::new(genes.clone(), edges)?,
        embeddings: EmbeddingMatrix::new(genes, h)?,
        w_star,
        config: cfg.clone(),
    })
}

/// Complete TF x gene label grid with per-TF positive rates spread evenly
/// over `[rate_lo, rate_hi]` and no expression signal at all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasConfig {
    pub p: usize,
    pub n_tfs: usize,
    pub rate_lo: f64,
    pub rate_hi: f64,
    pub seed: u64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            p: 40,
            n_tfs: 8,
            rate_lo: 0.05,
            rate_hi: 0.95,
            seed: 0,
        }
    }
}

/// Per-TF rates and the sampled labels.
pub fn biased_labels(cfg: &BiasConfig) -> Result<(Vec<f64>, LabeledEdges)> {
    if cfg.n_tfs < 1 || cfg.n_tfs > cfg.p || cfg.p < 2 {
        return Err(Error::InvalidConfig(format!("need 1 <= n_tfs <= p, p >= 2 (got {}, {})", cfg.n_tfs, cfg.p)));
    }
    if !(0.0 <= cfg.rate_lo && cfg.rate_lo <= cfg.rate_hi && cfg.rate_hi <= 1.0) {
        return Err(Error::InvalidConfig("need 0 <= rate_lo <= rate_hi <= 1".into()));
    }
    let mut rng = Rng::seed_from_u64(cfg.seed);
    let rates: Vec<f64> = (0..cfg.n_tfs)
        .map(|i| {
            if cfg.n_tfs == 1 {
                cfg.rate_lo
            } else {
                cfg.rate_lo + (cfg.rate_hi - cfg.rate_lo) * i as f64 / (cfg.n_tfs - 1) as f64
            }
        })
        .collect();
    let mut edges = Vec::new();
    for (i, &r) in rates.iter().enumerate() {
        for k in (0..cfg.p).filter(|&k| k != i) {
            edges.push(Edge::new(i, k, rng.bernoulli(r)));
        }
    }
    let labels = LabeledEdges::new(synthetic_gene_names(cfg.p, cfg.n_tfs), edges)?;
    Ok((rates, labels))
}
