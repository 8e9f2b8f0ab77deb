use serde::{Deserialize, Serialize};

use crate::dataio::LabeledEdges;
use crate::error::{Error, Result};
use crate::numkit::{lu_factor, normal_matrix, Matrix, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatCompConfig {
    /// Latent rank; `None` picks `min(16, P/4)` (at least 1).
    pub rank: Option<usize>,
    pub lambda: f64,
    pub sweeps: usize,
    /// Stop early once a sweep improves the objective by less than this.
    pub tol: f64,
}

impl Default for MatCompConfig {
    fn default() -> Self {
        Self {
            rank: None,
            lambda: 0.1,
            sweeps: 50,
            tol: 1e-10,
        }
    }
}

pub fn default_rank(p: usize) -> usize {
    (p / 4).clamp(1, 16)
}

/// Low-rank factorization `Ŷ = U Vᵀ` of the partially observed label matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatCompModel {
    pub u: Matrix,
    pub v: Matrix,
    pub rank: usize,
    pub lambda: f64,
    /// Objective after initialization and after each sweep.
    pub objective_trace: Vec<f64>,
}

impl MatCompModel {
    pub fn n_genes(&self) -> usize {
        self.u.rows()
    }

    pub fn predict(&self, i: usize, k: usize) -> Result<f64> {
        let p = self.n_genes();
        for idx in [i, k] {
            if idx >= p {
                return Err(Error::IndexOutOfRange { index: idx, len: p });
            }
        }
        Ok(dot(self.u.row(i), self.v.row(k)))
    }

    pub fn scores(&self, edges: &LabeledEdges) -> Result<Vec<f64>> {
        edges.edges().iter().map(|e| self.predict(e.tf, e.tg)).collect()
    }

    pub fn objective(&self, edges: &LabeledEdges) -> f64 {
        let fit: f64 = edges
            .edges()
            .iter()
            .map(|e| {
                let r = label_value(e.label) - dot(self.u.row(e.tf), self.v.row(e.tg));
                r * r
            })
            .sum();
        let norm = self.u.as_slice().iter().chain(self.v.as_slice()).map(|x| x * x).sum::<f64>();
        fit + self.lambda * norm
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn label_value(label: bool) -> f64 {
    if label {
        1.0
    } else {
        0.0
    }
}

/// Alternating ridge least squares over the observed entries.
pub fn matcomp_fit(edges: &LabeledEdges, p: usize, cfg: &MatCompConfig, seed: u64) -> Result<MatCompModel> {
    let r = cfg.rank.unwrap_or_else(|| default_rank(p));
    if r == 0 || r > p {
        return Err(Error::InvalidConfig(format!("rank {r} must be in 1..={p}")));
    }
    if !(cfg.lambda >= 0.0) {
        return Err(Error::InvalidConfig("lambda must be >= 0".into()));
    }
    if edges.n_genes() != p {
        return Err(Error::DimensionMismatch(format!(
            "edges over {} genes, model over {p}",
            edges.n_genes()
        )));
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
    for e in edges.edges() {
        rows[e.tf].push((e.tg, label_value(e.label)));
        cols[e.tg].push((e.tf, label_value(e.label)));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let scale = 1.0 / (r as f64).sqrt();
    let mut model = MatCompModel {
        u: normal_matrix(&mut rng, p, r, scale).map(f64::abs),
        v: normal_matrix(&mut rng, p, r, scale).map(f64::abs),
        rank: r,
        lambda: cfg.lambda,
        objective_trace: Vec::new(),
    };
    // Latent factors of genes without observations carry no signal.
    for i in 0..p {
        if rows[i].is_empty() {
            model.u.row_mut(i).fill(0.0);
        }
        if cols[i].is_empty() {
            model.v.row_mut(i).fill(0.0);
        }
    }
    let mut obj = model.objective(edges);
    model.objective_trace.push(obj);
    for _ in 0..cfg.sweeps {
        ridge_update(&mut model.u, &model.v, &rows, cfg.lambda)?;
        ridge_update(&mut model.v, &model.u, &cols, cfg.lambda)?;
        let next = model.objective(edges);
        model.objective_trace.push(next);
        let done = obj - next < cfg.tol * obj.max(1.0);
        obj = next;
        if done {
            break;
        }
    }
    Ok(model)
}

/// Re-solves each row of `target` given the fixed `other` factor.
fn ridge_update(target: &mut Matrix, other: &Matrix, obs: &[Vec<(usize, f64)>], lambda: f64) -> Result<()> {
    let r = target.cols();
    for (i, entries) in obs.iter().enumerate() {
        if entries.is_empty() {
            continue;
        }
        let mut gram = Matrix::zeros(r, r);
        let mut rhs = Matrix::zeros(r, 1);
        for &(j, y) in entries {
            let f = other.row(j);
            for a in 0..r {
                rhs.as_mut_slice()[a] += y * f[a];
                for b in 0..r {
                    gram.as_mut_slice()[a * r + b] += f[a] * f[b];
                }
            }
        }
        for d in 0..r {
            gram.as_mut_slice()[d * r + d] += lambda;
        }
        let sol = match lu_factor(&gram) {
            Ok(lu) => lu.solve(&rhs)?,
            // Rank-deficient without a ridge: keep the current row.
            Err(Error::SingularMatrix { .. }) => continue,
            Err(e) => return Err(e),
        };
        target.row_mut(i).copy_from_slice(sol.as_slice());
    }
    Ok(())
}
