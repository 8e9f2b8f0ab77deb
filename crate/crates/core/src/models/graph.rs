//! ELBO computation graphs for all three variants.

use std::f64::consts::PI;

use serde::Serialize;

use super::mlp::MlpVars;
use super::state::{ModelState, Variant};
use super::PriorConfig;
use crate::autodiff::{gradient, ParamVector, Tape, Var};
use crate::dataio::LabeledEdges;
use crate::error::{Error, Result};
use crate::numkit::{normal_matrix, Matrix, Rng};

/// Observed logit targets for the label prior.
#[derive(Clone, Debug)]
struct LabelTargets {
    mask: Matrix,
    target: Matrix,
    count: usize,
}

impl LabelTargets {
    fn new(y: &LabeledEdges, p: usize, prior: &PriorConfig) -> Result<Self> {
        if y.n_genes() != p {
            return Err(Error::DimensionMismatch(format!(
                "labels over {} genes for a model over {p}",
                y.n_genes()
            )));
        }
        let mut mask = Matrix::zeros(p, p);
        let mut target = Matrix::zeros(p, p);
        for e in y.edges() {
            mask[(e.tf, e.tg)] = 1.0;
            target[(e.tf, e.tg)] = if e.label { prior.logit_hi } else { prior.logit_lo };
        }
        Ok(Self {
            mask,
            target,
            count: y.len(),
        })
    }
}

/// Values of the individual ELBO terms (already scaled to the full data).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ElboTerms {
    pub reconstruction: f64,
    pub adjacency_prior: f64,
    pub weight_prior: f64,
    pub label_prior: f64,
    pub kl: f64,
    pub elbo: f64,
}

#[derive(Clone, Copy, Debug)]
struct TermVars {
    reconstruction: Var,
    adjacency_prior: Option<Var>,
    weight_prior: Option<Var>,
    label_prior: Option<Var>,
    kl: Var,
    elbo: Var,
}

/// The variant ELBO on a fixed batch of cells with fixed reparameterization
/// noise, as a differentiable function of [`ModelState::params`].
///
/// Per-cell terms (reconstruction and KL) are multiplied by `cell_scale`,
/// typically `N / batch`; prior terms are not.
#[derive(Clone, Debug)]
pub struct ElboObjective {
    variant: Variant,
    prior: PriorConfig,
    enc_hidden: usize,
    dec_hidden: usize,
    x: Matrix,
    eps: Vec<Matrix>,
    cell_scale: f64,
    embed_split: Option<(Matrix, Matrix)>,
    labels: Option<LabelTargets>,
    support: Option<Matrix>,
}

impl ElboObjective {
    pub fn new(
        state: &ModelState,
        x: Matrix,
        eps: Vec<Matrix>,
        cell_scale: f64,
        y: Option<&LabeledEdges>,
    ) -> Result<Self> {
        state.validate()?;
        let p = state.n_genes();
        if x.rows() != p {
            return Err(Error::DimensionMismatch(format!(
                "expression has {} genes, model has {p}",
                x.rows()
            )));
        }
        if eps.is_empty() {
            return Err(Error::InvalidConfig("at least one noise sample is required".into()));
        }
        if eps.iter().any(|e| e.shape() != x.shape()) {
            return Err(Error::DimensionMismatch("noise shape differs from expression batch".into()));
        }
        let embed_split = state.embedding.as_ref().map(|e| {
            let (p, d) = e.h.shape();
            let mut left = Matrix::zeros(p, 2 * d);
            let mut right = Matrix::zeros(p, 2 * d);
            for i in 0..p {
                left.row_mut(i)[..d].copy_from_slice(e.h.row(i));
                right.row_mut(i)[d..].copy_from_slice(e.h.row(i));
            }
            (left, right)
        });
        let labels = match state.variant {
            Variant::InfoSemBc => {
                let y = y.ok_or_else(|| {
                    Error::MissingInput("infosem-bc needs a (possibly empty) label set".into())
                })?;
                Some(LabelTargets::new(y, p, &state.prior)?)
            }
            _ => None,
        };
        Ok(Self {
            variant: state.variant,
            prior: state.prior.clone(),
            enc_hidden: state.encoder.hidden.len(),
            dec_hidden: state.decoder.hidden.len(),
            x,
            eps,
            cell_scale,
            embed_split,
            labels,
            support: state.regulators.is_some().then(|| state.support()),
        })
    }

    /// Draws `samples` standard-normal noise matrices from `rng`.
    pub fn sampled(
        state: &ModelState,
        x: Matrix,
        samples: usize,
        cell_scale: f64,
        y: Option<&LabeledEdges>,
        rng: &mut Rng,
    ) -> Result<Self> {
        let (r, c) = x.shape();
        let eps = (0..samples).map(|_| normal_matrix(rng, r, c, 1.0)).collect();
        Self::new(state, x, eps, cell_scale, y)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Builds the ELBO on `t` from leaves laid out as [`ModelState::params`].
    pub fn build(&self, t: &mut Tape, vars: &[Var]) -> Result<Var> {
        Ok(self.build_terms(t, vars)?.elbo)
    }

    /// Value and gradient at `params`.
    pub fn value_and_gradient(&self, params: &ParamVector) -> Result<(f64, ParamVector)> {
        gradient(&|t: &mut Tape, v: &[Var]| self.build(t, v), params)
    }

    /// Term-by-term values at the parameters of `state`.
    pub fn terms(&self, state: &ModelState) -> Result<ElboTerms> {
        let mut t = Tape::new();
        let vars: Vec<Var> = state
            .params()
            .matrices()
            .into_iter()
            .map(|m| t.leaf(m))
            .collect::<Result<_>>()?;
        let tv = self.build_terms(&mut t, &vars)?;
        let get = |v: Option<Var>| v.map_or(0.0, |v| t.scalar(v));
        Ok(ElboTerms {
            reconstruction: t.scalar(tv.reconstruction),
            adjacency_prior: get(tv.adjacency_prior),
            weight_prior: get(tv.weight_prior),
            label_prior: get(tv.label_prior),
            kl: t.scalar(tv.kl),
            elbo: t.scalar(tv.elbo),
        })
    }

    fn build_terms(&self, t: &mut Tape, vars: &[Var]) -> Result<TermVars> {
        let mut next = 0;
        let mut take = |n: usize| {
            let s = &vars[next..next + n];
            next += n;
            s.to_vec()
        };
        let adj_raw = take(1)[0];
        let factors = (self.variant == Variant::InfoSemBc).then(|| {
            let f = take(2);
            (f[0], f[1])
        });
        let w = self.embed_split.as_ref().map(|_| take(1)[0]);
        let enc = MlpVars::bind(self.enc_hidden, &take(2 * (self.enc_hidden + 2)));
        let dec = MlpVars::bind(self.dec_hidden, &take(2 * (self.dec_hidden + 2)));
        if next != vars.len() {
            return Err(Error::DimensionMismatch(format!(
                "objective expects {next} parameter segments, got {}",
                vars.len()
            )));
        }

        let p = t.value(adj_raw).rows();
        let adj = t.mask_diagonal(adj_raw)?;
        let support = match &self.support {
            Some(s) => Some(t.leaf(s.clone())?),
            None => None,
        };
        let adj = match support {
            Some(s) => t.mul(adj, s)?,
            None => adj,
        };
        let logits = match factors {
            Some((a, b)) => Some(t.matmul(a, b)?),
            None => None,
        };
        let a = match logits {
            Some(l) => {
                let gate = t.sigmoid(l)?;
                let prod = t.mul(adj, gate)?;
                t.mask_diagonal(prod)?
            }
            None => adj,
        };
        let eye = t.leaf(Matrix::identity(p))?;
        let at = t.transpose(a)?;
        let m = t.sub(eye, at)?;

        let x = t.leaf(self.x.clone())?;
        let (mu, std) = enc.forward(t, x)?;

        let mut recon_terms = Vec::with_capacity(self.eps.len());
        for eps in &self.eps {
            let e = t.leaf(eps.clone())?;
            let noise = t.mul(std, e)?;
            let z_hat = t.add(mu, noise)?;
            let (mean, var) = dec.forward(t, z_hat)?;
            recon_terms.push(gaussian_loglik(t, x, mean, var)?);
        }
        let recon = t.add_all(&recon_terms)?;
        let reconstruction = t.scale(recon, self.cell_scale / self.eps.len() as f64)?;

        let kl_raw = kl_closed_form(t, mu, std, m, self.prior.sigma_z)?;
        let kl = t.scale(kl_raw, self.cell_scale)?;

        let n_off = self
            .support
            .as_ref()
            .map_or((p * (p - 1)) as f64, |s| s.as_slice().iter().sum());
        let sigma_a = self.prior.sigma_a;
        let (adjacency_prior, weight_prior) = match (&self.embed_split, w) {
            (Some((left, right)), Some(w)) => {
                let mean = embedding_mean(t, w, left, right)?;
                let diff = t.sub(adj, mean)?;
                let lap = laplace_sum(t, diff, support, n_off, sigma_a)?;
                let ws = t.square(w)?;
                let ws = t.sum(ws)?;
                let s2 = self.prior.sigma_w * self.prior.sigma_w;
                let k = t.value(w).len() as f64;
                let wp = t.scale(ws, -1.0 / (2.0 * s2))?;
                let wp = t.offset(wp, -0.5 * k * (2.0 * PI * s2).ln())?;
                (lap, Some(wp))
            }
            _ => (laplace_sum(t, adj, support, n_off, sigma_a)?, None),
        };

        let label_prior = match (&self.labels, logits) {
            (Some(lt), Some(l)) => Some(if lt.count == 0 {
                t.constant_scalar(0.0)?
            } else {
                let target = t.leaf(lt.target.clone())?;
                let mask = t.leaf(lt.mask.clone())?;
                let diff = t.sub(l, target)?;
                let sq = t.square(diff)?;
                let sq = t.mul(sq, mask)?;
                let total = t.sum(sq)?;
                let s2 = self.prior.sigma_l * self.prior.sigma_l;
                let lp = t.scale(total, -1.0 / (2.0 * s2))?;
                t.offset(lp, -0.5 * lt.count as f64 * (2.0 * PI * s2).ln())?
            }),
            _ => None,
        };

        let weighted_kl = t.scale(kl, -self.prior.beta)?;
        let mut parts = vec![reconstruction, adjacency_prior];
        parts.extend(weight_prior);
        parts.extend(label_prior);
        parts.push(weighted_kl);
        let elbo = t.add_all(&parts)?;
        Ok(TermVars {
            reconstruction,
            adjacency_prior: Some(adjacency_prior),
            weight_prior,
            label_prior,
            kl,
            elbo,
        })
    }
}

/// `Σ log N(x; mean, var)` over all entries.
fn gaussian_loglik(t: &mut Tape, x: Var, mean: Var, var: Var) -> Result<Var> {
    let n = t.value(x).len() as f64;
    let diff = t.sub(x, mean)?;
    let sq = t.square(diff)?;
    let q = t.div(sq, var)?;
    let lv = t.ln(var)?;
    let s = t.add(lv, q)?;
    let total = t.sum(s)?;
    let half = t.scale(total, -0.5)?;
    t.offset(half, -0.5 * n * (2.0 * PI).ln())
}

/// Closed-form KL between the pushed-forward encoder posterior and
/// `N(0, σ_z² I)`, summed over cells.
fn kl_closed_form(t: &mut Tape, mu: Var, std: Var, m: Var, sigma_z: f64) -> Result<Var> {
    let (p, b) = t.value(mu).shape();
    let s2 = sigma_z * sigma_z;
    let ones = t.leaf(Matrix::ones(1, p))?;
    let m_sq = t.square(m)?;
    let col_norms = t.matmul(ones, m_sq)?;
    let var = t.square(std)?;
    let spread = t.matmul(col_norms, var)?;
    let spread = t.sum(spread)?;
    let mean = t.matmul(m, mu)?;
    let mean = t.square(mean)?;
    let mean = t.sum(mean)?;
    let quad = t.add(spread, mean)?;
    let quad = t.scale(quad, 1.0 / s2)?;
    let logdet = t.log_abs_det(m)?;
    let logdet = t.scale(logdet, -2.0 * b as f64)?;
    let log_std = t.ln(std)?;
    let log_std = t.sum(log_std)?;
    let log_std = t.scale(log_std, -2.0)?;
    let total = t.add_all(&[quad, logdet, log_std])?;
    let pb = (p * b) as f64;
    let total = t.offset(total, -pb + pb * s2.ln())?;
    t.scale(total, 0.5)
}

/// `Σ log Laplace(d_ik; 0, σ)` over the `n_off` entries of `support`, or
/// over all off-diagonal entries.
fn laplace_sum(t: &mut Tape, diff: Var, support: Option<Var>, n_off: f64, sigma: f64) -> Result<Var> {
    let d = match support {
        Some(s) => t.mul(diff, s)?,
        None => t.mask_diagonal(diff)?,
    };
    let a = t.abs(d)?;
    let s = t.sum(a)?;
    let s = t.scale(s, -1.0 / sigma)?;
    t.offset(s, -n_off * (2.0 * sigma).ln())
}

/// `m_ik = [h_i, h_k]·wᵀ` with the diagonal masked.
fn embedding_mean(t: &mut Tape, w: Var, left: &Matrix, right: &Matrix) -> Result<Var> {
    let p = left.rows();
    let wt = t.transpose(w)?;
    let hl = t.leaf(left.clone())?;
    let hr = t.leaf(right.clone())?;
    let c = t.matmul(hl, wt)?;
    let g = t.matmul(hr, wt)?;
    let ones_row = t.leaf(Matrix::ones(1, p))?;
    let ones_col = t.leaf(Matrix::ones(p, 1))?;
    let by_row = t.matmul(c, ones_row)?;
    let gt = t.transpose(g)?;
    let by_col = t.matmul(ones_col, gt)?;
    let m = t.add(by_row, by_col)?;
    t.mask_diagonal(m)
}
