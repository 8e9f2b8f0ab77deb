use std::fs;
use std::path::Path;

use grnsem::baselines::{onehot_lr_predict, MatCompModel, OneHotLrModel};
use grnsem::models::{edge_scores_with, BcScore, ModelState, Variant};
use grnsem::numkit::Matrix;
use grnsem::Result;
use serde::{Deserialize, Serialize};

use crate::config::CliConfig;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoredModel {
    Sem { state: Box<ModelState> },
    OneHotLr { model: OneHotLrModel },
    MatComp { model: MatCompModel },
}

/// A trained model with its gene order and the run settings behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub seed: u64,
    pub config: CliConfig,
    pub genes: Vec<String>,
    pub model: StoredModel,
}

impl ModelFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let fail = |m: String| CliError::usage(format!("model file {}: {m}", path.display()));
        let text = fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
        let p = match &file.model {
            StoredModel::Sem { state } => {
                state.validate()?;
                state.n_genes()
            }
            StoredModel::OneHotLr { model } => model.n_genes(),
            StoredModel::MatComp { model } => model.n_genes(),
        };
        if p != file.genes.len() {
            return Err(fail(format!("{} genes listed for a {p}-gene model", file.genes.len())));
        }
        Ok(file)
    }

    pub fn name(&self) -> &'static str {
        match &self.model {
            StoredModel::Sem { state } => state.variant.as_str(),
            StoredModel::OneHotLr { .. } => "onehot-lr",
            StoredModel::MatComp { .. } => "matcomp",
        }
    }

    /// Whether [`Self::scores`] under `mode` are probabilities.
    pub fn emits_probabilities(&self, mode: BcScore) -> bool {
        match &self.model {
            StoredModel::Sem { state } => state.variant == Variant::InfoSemBc && mode == BcScore::Logit,
            StoredModel::OneHotLr { .. } | StoredModel::MatComp { .. } => true,
        }
    }

    /// `P x P` edge scores, `-inf` on the diagonal.
    pub fn scores(&self, mode: BcScore) -> Result<Matrix> {
        let p = self.genes.len();
        let predict = |f: &dyn Fn(usize, usize) -> Result<f64>| -> Result<Matrix> {
            let mut s = Matrix::zeros(p, p);
            for i in 0..p {
                for k in 0..p {
                    s[(i, k)] = if i == k { f64::NEG_INFINITY } else { f(i, k)? };
                }
            }
            Ok(s)
        };
        match &self.model {
            StoredModel::Sem { state } => edge_scores_with(state, mode),
            StoredModel::OneHotLr { model } => predict(&|i, k| onehot_lr_predict(model, i, k)),
            StoredModel::MatComp { model } => predict(&|i, k| model.predict(i, k)),
        }
    }
}
