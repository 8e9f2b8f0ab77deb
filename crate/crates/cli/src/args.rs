use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use grnsem::models::BcScore;

use crate::config::{Kind, ProbMap};

#[derive(Debug, Parser)]
#[command(name = "grnsem", version, about = "Gene regulatory network inference with variational linear SEMs")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// JSON config file, or a `*.run.json` record to replay.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel training and benchmark repeats.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate expression, labels, embeddings and the true adjacency.
    Generate(GenerateArgs),
    /// Split labeled edges into train, seen-test and unseen-test sets.
    Split(SplitArgs),
    /// Fit one model on the expression data and the train labels.
    Train(TrainArgs),
    /// Write the edge-score matrix of a trained model.
    Score(ScoreArgs),
    /// Score a stored model on the test sets of a stored split.
    Evaluate(EvaluateArgs),
    /// Repeated split / train / evaluate over several models.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of cells.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_tfs: Option<usize>,
    #[arg(long)]
    pub edges_per_tf: Option<usize>,
    /// Embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Embedding informativeness in [0, 1].
    #[arg(long, value_parser = unit_interval)]
    pub rho: Option<f64>,
    #[arg(long, value_parser = positive)]
    pub sigma_z: Option<f64>,
    #[arg(long, value_parser = positive)]
    pub effect_lo: Option<f64>,
    #[arg(long, value_parser = positive)]
    pub effect_hi: Option<f64>,
    #[arg(long, value_parser = unit_interval)]
    pub negative_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Expression CSV supplying the gene list.
    #[arg(long)]
    pub expression: PathBuf,
    /// Labels TSV (`tf<TAB>tg<TAB>label`).
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub expression: PathBuf,
    #[arg(long, value_enum)]
    pub variant: Option<Kind>,
    /// Gene embeddings CSV (required for infosem-b and infosem-bc).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Split file; only its train partition is read.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Ranking matrix for infosem-bc.
    #[arg(long)]
    pub score: Option<BcScore>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["model", "scores"])))]
pub struct EvaluateArgs {
    #[arg(long)]
    pub split: PathBuf,
    /// Trained model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Edge-score matrix CSV.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Ranking matrix for infosem-bc models.
    #[arg(long)]
    pub score: Option<BcScore>,
    /// Also report recall at probability 0.5.
    #[arg(long)]
    pub recall: bool,
    /// How edge weights become probabilities for recall.
    #[arg(long, value_enum)]
    pub prob_map: Option<ProbMap>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub expression: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Comma-separated models.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub models: Option<Vec<Kind>>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: Option<u64>,
    /// Balance negatives per TF in the supervised train labels.
    #[arg(long)]
    pub downsample: bool,
    /// Ensemble size of each variational model.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub members: Option<u64>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

/// Model and training overrides shared by `train` and `benchmark`.
#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = positive)]
    pub lr_adjacency: Option<f64>,
    #[arg(long, value_parser = positive)]
    pub lr_networks: Option<f64>,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long, value_parser = positive)]
    pub sigma_a: Option<f64>,
    /// Latent noise scale of the model prior.
    #[arg(long = "prior-sigma-z", value_parser = positive)]
    pub sigma_z: Option<f64>,
    #[arg(long, value_parser = positive)]
    pub sigma_w: Option<f64>,
    #[arg(long, value_parser = positive)]
    pub sigma_l: Option<f64>,
    #[arg(long, value_parser = positive)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub rank_h: Option<usize>,
    /// Encoder hidden widths, comma-separated; `none` for linear.
    #[arg(long, value_parser = layers)]
    pub encoder_hidden: Option<Layers>,
    /// Decoder hidden widths, comma-separated; `none` for linear.
    #[arg(long, value_parser = layers)]
    pub decoder_hidden: Option<Layers>,
    /// Ranking matrix for infosem-bc.
    #[arg(long)]
    pub score: Option<BcScore>,
    #[arg(long)]
    pub log1p: bool,
    #[arg(long)]
    pub zscore: bool,
    /// Let every gene regulate instead of only the flagged TFs.
    #[arg(long)]
    pub all_regulators: bool,
    /// L2 penalty of the one-hot logistic regression.
    #[arg(long, value_parser = positive)]
    pub lr_lambda: Option<f64>,
    #[arg(long)]
    pub matcomp_rank: Option<usize>,
    #[arg(long, value_parser = positive)]
    pub matcomp_lambda: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layers(pub Vec<usize>);

fn layers(s: &str) -> Result<Layers, String> {
    let t = s.trim();
    if t.is_empty() || t == "none" {
        return Ok(Layers(vec![]));
    }
    t.split(',')
        .map(|w| match w.trim().parse::<usize>() {
            Ok(0) => Err("layer widths must be >= 1".to_string()),
            Ok(v) => Ok(v),
            Err(e) => Err(format!("`{w}`: {e}")),
        })
        .collect::<Result<_, _>>()
        .map(Layers)
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive and finite"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn layer_lists() {
        assert_eq!(layers("none").unwrap(), Layers(vec![]));
        assert_eq!(layers("16, 8").unwrap(), Layers(vec![16, 8]));
        assert!(layers("0").is_err());
        assert!(layers("x").is_err());
    }

    #[test]
    fn ranges() {
        assert!(unit_interval("1.5").is_err());
        assert_eq!(unit_interval("0.25").unwrap(), 0.25);
        assert!(positive("0").is_err());
        assert!(positive("inf").is_err());
    }
}
