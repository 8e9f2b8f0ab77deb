use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;
use super::{logit_hi, logit_lo};
use crate::autodiff::{ParamVector, SegmentGroup};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "deepsem")]
    DeepSem,
    #[serde(rename = "infosem-b")]
    InfoSemB,
    #[serde(rename = "infosem-bc")]
    InfoSemBc,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::DeepSem, Variant::InfoSemB, Variant::InfoSemBc];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::DeepSem => "deepsem",
            Variant::InfoSemB => "infosem-b",
            Variant::InfoSemBc => "infosem-bc",
        }
    }

    pub fn uses_embeddings(self) -> bool {
        !matches!(self, Variant::DeepSem)
    }

    pub fn uses_labels(self) -> bool {
        matches!(self, Variant::InfoSemBc)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deepsem" => Ok(Variant::DeepSem),
            "infosem-b" => Ok(Variant::InfoSemB),
            "infosem-bc" => Ok(Variant::InfoSemBc),
            other => Err(Error::InvalidConfig(format!("unknown model variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Laplace scale of the adjacency prior.
    pub sigma_a: f64,
    /// Standard deviation of the latent noise prior.
    pub sigma_z: f64,
    /// Standard deviation of the embedding-weight prior.
    pub sigma_w: f64,
    /// Standard deviation of the label prior on logits.
    pub sigma_l: f64,
    /// Weight on the KL term.
    pub beta: f64,
    /// Rank of the low-rank logit factorization.
    pub rank_h: usize,
    pub logit_hi: f64,
    pub logit_lo: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            sigma_a: 1.0,
            sigma_z: 1.0,
            sigma_w: 1.0,
            sigma_l: 0.1f64.sqrt(),
            beta: 1.0,
            rank_h: 4,
            logit_hi: logit_hi(),
            logit_lo: logit_lo(),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_a", self.sigma_a),
            ("sigma_z", self.sigma_z),
            ("sigma_w", self.sigma_w),
            ("sigma_l", self.sigma_l),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.rank_h == 0 {
            return Err(Error::InvalidConfig("rank_h must be >= 1".into()));
        }
        if self.logit_hi != logit_hi() || self.logit_lo != logit_lo() {
            return Err(Error::InvalidConfig("label logits must be +-ln 19".into()));
        }
        Ok(())
    }
}

/// Factors of the interaction logits, `Aˡ = a · b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowRankLogits {
    /// `P x h`
    pub a: Matrix,
    /// `h x P`
    pub b: Matrix,
}

impl LowRankLogits {
    pub fn product(&self) -> Result<Matrix> {
        self.a.matmul(&self.b)
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }
}

/// Gene embeddings `H` (data) and the linear read-out `w` (parameter).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPrior {
    /// `P x d`
    pub h: Matrix,
    /// `1 x 2d`: the first half multiplies the regulator, the second the target.
    pub w: Matrix,
}

impl EmbeddingPrior {
    pub fn new(h: Matrix) -> Self {
        let d = h.cols();
        Self {
            h,
            w: Matrix::zeros(1, 2 * d),
        }
    }

    pub fn dim(&self) -> usize {
        self.h.cols()
    }
}

pub(crate) const SEG_ADJ: &str = "adjacency";
pub(crate) const SEG_LOGIT_A: &str = "logits.a";
pub(crate) const SEG_LOGIT_B: &str = "logits.b";
pub(crate) const SEG_W: &str = "w";
pub(crate) const SEG_ENC: &str = "encoder";
pub(crate) const SEG_DEC: &str = "decoder";

/// All free variables and fixed inputs of one model.
///
/// `adjacency` holds Ã for DeepSEM and InfoSEM-B, and the effect matrix Ãᵉ
/// for InfoSEM-BC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub variant: Variant,
    pub adjacency: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<LowRankLogits>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingPrior>,
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub prior: PriorConfig,
    /// Genes allowed to regulate; `None` lets every gene regulate. Rows of
    /// other genes stay zero and are left out of the adjacency prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regulators: Option<Vec<bool>>,
}

impl ModelState {
    pub fn n_genes(&self) -> usize {
        self.adjacency.rows()
    }

    /// Limits regulation to the genes flagged in `regulators` and zeroes the
    /// adjacency rows of all other genes.
    pub fn restrict_regulators(&mut self, regulators: &[bool]) -> Result<()> {
        let p = self.n_genes();
        if regulators.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "{} regulator flags for {p} genes",
                regulators.len()
            )));
        }
        if !regulators.iter().any(|&r| r) {
            return Err(Error::InvalidConfig("no gene is allowed to regulate".into()));
        }
        for (i, &r) in regulators.iter().enumerate() {
            if !r {
                self.adjacency.row_mut(i).fill(0.0);
            }
        }
        self.regulators = Some(regulators.to_vec());
        Ok(())
    }

    /// 0/1 matrix of the free adjacency entries: off-diagonal entries of
    /// regulator rows.
    pub fn support(&self) -> Matrix {
        let p = self.n_genes();
        let mut s = Matrix::zeros(p, p);
        for i in 0..p {
            if self.regulators.as_ref().is_none_or(|r| r[i]) {
                s.row_mut(i).fill(1.0);
                s[(i, i)] = 0.0;
            }
        }
        s
    }

    /// Checks that the active fields match the variant and each other.
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        let p = self.adjacency.rows();
        if !self.adjacency.is_square() || p == 0 {
            return Err(Error::DimensionMismatch("adjacency must be square and non-empty".into()));
        }
        match (self.variant, &self.logits) {
            (Variant::InfoSemBc, None) => {
                return Err(Error::MissingInput("low-rank logits for infosem-bc".into()))
            }
            (Variant::InfoSemBc, Some(l)) => {
                if l.a.rows() != p || l.b.cols() != p || l.a.cols() != l.b.rows() {
                    return Err(Error::DimensionMismatch("low-rank logit factors".into()));
                }
                if l.rank() > p {
                    return Err(Error::InvalidConfig(format!("rank {} exceeds P={p}", l.rank())));
                }
            }
            (_, Some(_)) => {
                return Err(Error::InvalidConfig(format!(
                    "{} has no low-rank logits",
                    self.variant
                )))
            }
            _ => {}
        }
        match (self.variant.uses_embeddings(), &self.embedding) {
            (true, None) => {
                return Err(Error::MissingInput(format!("gene embeddings for {}", self.variant)))
            }
            (true, Some(e)) => {
                if e.h.rows() != p || e.h.cols() == 0 || e.w.shape() != (1, 2 * e.h.cols()) {
                    return Err(Error::DimensionMismatch("embedding prior".into()));
                }
            }
            (false, Some(_)) => {
                return Err(Error::InvalidConfig("deepsem has no embedding prior".into()))
            }
            (false, None) => {}
        }
        if let Some(r) = &self.regulators {
            if r.len() != p {
                return Err(Error::DimensionMismatch(format!("{} regulator flags for {p} genes", r.len())));
            }
            let stray = (0..p).any(|i| !r[i] && self.adjacency.row(i).iter().any(|&v| v != 0.0));
            if stray {
                return Err(Error::InvalidConfig("non-regulator rows of the adjacency must be zero".into()));
            }
        }
        Ok(())
    }

    /// Free variables, flattened. Layout: adjacency, logit factors, w,
    /// encoder layers, decoder layers (absent fields skipped).
    pub fn params(&self) -> ParamVector {
        let mut pv = ParamVector::new();
        pv.push(SEG_ADJ, SegmentGroup::Adjacency, &self.adjacency);
        if let Some(l) = &self.logits {
            pv.push(SEG_LOGIT_A, SegmentGroup::LowRank, &l.a);
            pv.push(SEG_LOGIT_B, SegmentGroup::LowRank, &l.b);
        }
        if let Some(e) = &self.embedding {
            pv.push(SEG_W, SegmentGroup::EmbeddingWeights, &e.w);
        }
        self.encoder.push_params(SEG_ENC, SegmentGroup::Encoder, &mut pv);
        self.decoder.push_params(SEG_DEC, SegmentGroup::Decoder, &mut pv);
        pv
    }

    /// Copies values from a vector laid out by [`ModelState::params`].
    pub fn load_params(&mut self, pv: &ParamVector) -> Result<()> {
        self.adjacency = pv.require(SEG_ADJ)?;
        if let Some(l) = &mut self.logits {
            l.a = pv.require(SEG_LOGIT_A)?;
            l.b = pv.require(SEG_LOGIT_B)?;
        }
        if let Some(e) = &mut self.embedding {
            e.w = pv.require(SEG_W)?;
        }
        self.encoder.load_params(SEG_ENC, pv)?;
        self.decoder.load_params(SEG_DEC, pv)?;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.adjacency.is_finite()
            && self
                .logits
                .as_ref()
                .is_none_or(|l| l.a.is_finite() && l.b.is_finite())
            && self.embedding.as_ref().is_none_or(|e| e.w.is_finite())
            && self.encoder.is_finite()
            && self.decoder.is_finite()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let state: Self = serde_json::from_str(text)?;
        state.validate()?;
        Ok(state)
    }
}
