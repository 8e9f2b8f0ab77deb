use std::fs;
use std::path::Path;

use clap::ValueEnum;
use grnsem::baselines::{LrConfig, MatCompConfig};
use grnsem::dataio::GenConfig;
use grnsem::evalbench::{BenchConfig, BenchModel, ModelSpec};
use grnsem::models::{BcScore, Variant};
use grnsem::training::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::args::HyperArgs;
use crate::error::{CliError, CliResult};

/// Model families the CLI can train or benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Deepsem,
    InfosemB,
    InfosemBc,
    OnehotLr,
    Matcomp,
    Random,
}

impl Kind {
    pub fn variant(self) -> Option<Variant> {
        match self {
            Kind::Deepsem => Some(Variant::DeepSem),
            Kind::InfosemB => Some(Variant::InfoSemB),
            Kind::InfosemBc => Some(Variant::InfoSemBc),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Deepsem => "deepsem",
            Kind::InfosemB => "infosem-b",
            Kind::InfosemBc => "infosem-bc",
            Kind::OnehotLr => "onehot-lr",
            Kind::Matcomp => "matcomp",
            Kind::Random => "random",
        }
    }
}

/// Turns edge weights into probabilities for recall at 0.5.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProbMap {
    /// No mapping; recall needs a model that emits probabilities.
    #[default]
    None,
    /// Scores already lie in [0, 1].
    Identity,
    /// Min-max rescaling over the off-diagonal scores.
    Minmax,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    pub log1p: bool,
    pub zscore: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub recall: bool,
    pub prob_map: ProbMap,
}

/// Fully resolved settings of one run: config file values with command
/// line flags applied on top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: u64,
    pub generate: GenConfig,
    pub variant: Kind,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub score: BcScore,
    pub members: usize,
    pub lr: LrConfig,
    pub matcomp: MatCompConfig,
    pub preprocess: Preprocess,
    /// Restrict regulators of the variational models to flagged TFs.
    pub tf_regulators: bool,
    pub benchmark: BenchConfig,
    /// Benchmark models; empty picks every model the inputs support.
    pub models: Vec<Kind>,
    pub evaluate: EvalConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            generate: GenConfig::default(),
            variant: Kind::Deepsem,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            score: BcScore::default(),
            members: 1,
            lr: LrConfig::default(),
            matcomp: MatCompConfig::default(),
            preprocess: Preprocess::default(),
            tf_regulators: true,
            benchmark: BenchConfig::default(),
            models: vec![],
            evaluate: EvalConfig::default(),
        }
    }
}

impl CliConfig {
    /// Reads a config file. A run record is accepted too; its `config`
    /// field is used.
    pub fn load(path: &Path) -> CliResult<Self> {
        let fail = |m: String| CliError::usage(format!("config file {}: {m}", path.display()));
        let text = fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
        if value.get("command").is_some() {
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
        }
        serde_json::from_value(value).map_err(|e| fail(e.to_string()))
    }

    /// Makes the top-level seed the seed of every stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.generate.seed = seed;
        self.train.seed = seed;
    }

    pub fn apply_hyper(&mut self, h: &HyperArgs) {
        let t = &mut self.train;
        set(&mut t.epochs, h.epochs);
        set(&mut t.batch_size, h.batch_size);
        set(&mut t.lr_adjacency, h.lr_adjacency);
        set(&mut t.lr_networks, h.lr_networks);
        set(&mut t.k1, h.k1);
        set(&mut t.k2, h.k2);
        set(&mut t.mc_samples, h.mc_samples);
        let pr = &mut self.model.prior;
        set(&mut pr.sigma_a, h.sigma_a);
        set(&mut pr.sigma_z, h.sigma_z);
        set(&mut pr.sigma_w, h.sigma_w);
        set(&mut pr.sigma_l, h.sigma_l);
        set(&mut pr.beta, h.beta);
        set(&mut pr.rank_h, h.rank_h);
        set(&mut self.model.encoder_hidden, h.encoder_hidden.clone().map(|l| l.0));
        set(&mut self.model.decoder_hidden, h.decoder_hidden.clone().map(|l| l.0));
        set(&mut self.score, h.score);
        self.preprocess.log1p |= h.log1p;
        self.preprocess.zscore |= h.zscore;
        if h.all_regulators {
            self.tf_regulators = false;
        }
        set(&mut self.lr.lambda, h.lr_lambda);
        if h.matcomp_rank.is_some() {
            self.matcomp.rank = h.matcomp_rank;
        }
        set(&mut self.matcomp.lambda, h.matcomp_lambda);
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.prior.validate()?;
        self.train.validate()?;
        if self.members == 0 {
            return Err(CliError::usage("members must be >= 1"));
        }
        if self.matcomp.rank == Some(0) {
            return Err(CliError::usage("--matcomp-rank must be >= 1"));
        }
        Ok(())
    }

    pub fn bench_model(&self, kind: Kind) -> BenchModel {
        let spec = match kind.variant() {
            Some(variant) => ModelSpec::Sem {
                variant,
                model: self.model.clone(),
                train: self.train.clone(),
                score: self.score,
                members: self.members,
            },
            None => match kind {
                Kind::OnehotLr => ModelSpec::OneHotLr { config: self.lr.clone() },
                Kind::Matcomp => ModelSpec::MatComp {
                    config: self.matcomp.clone(),
                },
                _ => ModelSpec::Random,
            },
        };
        BenchModel::new(spec)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = CliConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<CliConfig>(&text).unwrap(), c);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c: CliConfig = serde_json::from_str(r#"{"seed": 4, "train": {"epochs": 7}}"#).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(c.variant, Kind::Deepsem);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<CliConfig>(r#"{"sed": 4}"#).is_err());
    }

    #[test]
    fn run_records_replay_their_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.run.json");
        fs::write(&path, r#"{"command": "generate", "config": {"seed": 9}}"#).unwrap();
        assert_eq!(CliConfig::load(&path).unwrap().seed, 9);
    }

    #[test]
    fn kind_names_match_model_names() {
        let c = CliConfig::default();
        for k in Kind::value_variants() {
            assert_eq!(c.bench_model(*k).name, k.name());
        }
    }
}
