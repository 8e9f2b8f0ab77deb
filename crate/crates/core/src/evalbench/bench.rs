use std::fmt;
use std::io::Write;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{matcomp_fit, onehot_lr_scores, onehot_lr_train, random_scores, LrConfig, MatCompConfig};
use crate::dataio::LabeledEdges;
use crate::error::{Error, Result};
use crate::models::{BcScore, Variant};
use crate::numkit::{Matrix, Rng};
use crate::training::{ensemble_scores, ModelConfig, TrainConfig};

use super::metrics::{auprc, hit_at_1pct, mean_sem, recall_at_threshold};
use super::split::{downsample_negatives, make_split, BenchmarkSplit};

/// Expression (`P x N`), labels over the same genes, optional embeddings
/// (`P x d`, rows aligned to the genes).
#[derive(Clone, Debug)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: LabeledEdges,
    pub embeddings: Option<Matrix>,
    /// Genes the variational models may use as regulators; `None` allows all.
    pub regulators: Option<Vec<bool>>,
}

impl Dataset {
    pub fn new(x: Matrix, labels: LabeledEdges, embeddings: Option<Matrix>) -> Result<Self> {
        if x.rows() != labels.n_genes() {
            return Err(Error::DimensionMismatch(format!(
                "expression has {} genes, labels {}",
                x.rows(),
                labels.n_genes()
            )));
        }
        if let Some(h) = &embeddings {
            if h.rows() != x.rows() {
                return Err(Error::DimensionMismatch(format!(
                    "embeddings have {} rows for {} genes",
                    h.rows(),
                    x.rows()
                )));
            }
        }
        Ok(Self {
            x,
            labels,
            embeddings,
            regulators: None,
        })
    }

    /// Limits the variational models to the flagged regulators.
    pub fn with_regulators(mut self, regulators: Vec<bool>) -> Result<Self> {
        if regulators.len() != self.x.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} regulator flags for {} genes",
                regulators.len(),
                self.x.rows()
            )));
        }
        self.regulators = Some(regulators);
        Ok(self)
    }

    pub fn n_genes(&self) -> usize {
        self.x.rows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Sem {
        variant: Variant,
        #[serde(default)]
        model: ModelConfig,
        #[serde(default)]
        train: TrainConfig,
        #[serde(default)]
        score: BcScore,
        /// Independently seeded runs averaged into one score matrix.
        #[serde(default = "one")]
        members: usize,
    },
    OneHotLr {
        #[serde(default)]
        config: LrConfig,
    },
    MatComp {
        #[serde(default)]
        config: MatCompConfig,
    },
    Random,
}

fn one() -> usize {
    1
}

impl ModelSpec {
    pub fn sem(variant: Variant, model: ModelConfig, train: TrainConfig) -> Self {
        ModelSpec::Sem {
            variant,
            model,
            train,
            score: BcScore::default(),
            members: 1,
        }
    }

    pub fn default_name(&self) -> String {
        match self {
            ModelSpec::Sem { variant, .. } => variant.as_str().to_string(),
            ModelSpec::OneHotLr { .. } => "onehot-lr".into(),
            ModelSpec::MatComp { .. } => "matcomp".into(),
            ModelSpec::Random => "random".into(),
        }
    }

    /// Whether the scores are probabilities, so recall at 0.5 applies.
    pub fn emits_probabilities(&self) -> bool {
        match self {
            ModelSpec::Sem { variant, score, .. } => *variant == Variant::InfoSemBc && *score == BcScore::Logit,
            ModelSpec::OneHotLr { .. } | ModelSpec::MatComp { .. } => true,
            ModelSpec::Random => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchModel {
    pub name: String,
    pub spec: ModelSpec,
}

impl BenchModel {
    pub fn new(spec: ModelSpec) -> Self {
        Self {
            name: spec.default_name(),
            spec,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub n_repeats: usize,
    /// Balance negatives per TF in the supervised training labels.
    pub downsample: bool,
    /// Redraws allowed when a split leaves a test set with one class.
    pub max_split_attempts: usize,
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_repeats: 10,
            downsample: false,
            max_split_attempts: 100,
            parallel: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    SeenTest,
    UnseenTest,
}

impl SplitKind {
    pub const ALL: [SplitKind; 2] = [SplitKind::SeenTest, SplitKind::UnseenTest];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::SeenTest => "seen_test",
            SplitKind::UnseenTest => "unseen_test",
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auprc: f64,
    pub hit_at_1pct: f64,
    pub recall_at_0_5: Option<f64>,
}

impl Metrics {
    pub fn compute(labels: &[bool], scores: &[f64], probabilities: bool) -> Result<Self> {
        let recall = if probabilities {
            let probs: Vec<f64> = scores.iter().map(|s| s.clamp(0.0, 1.0)).collect();
            Some(recall_at_threshold(labels, &probs, 0.5)?)
        } else {
            None
        };
        Ok(Self {
            auprc: auprc(labels, scores)?,
            hit_at_1pct: hit_at_1pct(labels, scores)?,
            recall_at_0_5: recall,
        })
    }

    fn named(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![("auprc", self.auprc), ("hit_at_1pct", self.hit_at_1pct)];
        if let Some(r) = self.recall_at_0_5 {
            out.push(("recall_at_0_5", r));
        }
        out
    }
}

/// One model on one test set of one repeat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub model: String,
    pub split: SplitKind,
    pub repeat: usize,
    pub seed: u64,
    pub n_edges: usize,
    pub prevalence: f64,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub split: SplitKind,
    pub metric: String,
    pub mean: f64,
    pub sem: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub master_seed: u64,
    pub n_repeats: usize,
    pub models: Vec<String>,
    pub records: Vec<MetricRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl MetricsReport {
    pub fn from_records(master_seed: u64, n_repeats: usize, models: Vec<String>, records: Vec<MetricRecord>) -> Self {
        let mut aggregates = Vec::new();
        for model in &models {
            for split in SplitKind::ALL {
                let rows: Vec<&MetricRecord> = records
                    .iter()
                    .filter(|r| &r.model == model && r.split == split)
                    .collect();
                let mut names: Vec<&'static str> = vec!["prevalence"];
                for r in &rows {
                    if let Some(m) = &r.metrics {
                        for (n, _) in m.named() {
                            if !names.contains(&n) {
                                names.push(n);
                            }
                        }
                    }
                }
                for name in names {
                    let values: Vec<f64> = rows
                        .iter()
                        .filter_map(|r| {
                            let m = r.metrics.as_ref()?;
                            if name == "prevalence" {
                                Some(r.prevalence)
                            } else {
                                m.named().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
                            }
                        })
                        .collect();
                    if values.is_empty() {
                        continue;
                    }
                    let (mean, sem) = mean_sem(&values);
                    aggregates.push(Aggregate {
                        model: model.clone(),
                        split,
                        metric: name.to_string(),
                        mean,
                        sem,
                        count: values.len(),
                    });
                }
            }
        }
        Self {
            master_seed,
            n_repeats,
            models,
            records,
            aggregates,
        }
    }

    pub fn aggregate(&self, model: &str, split: SplitKind, metric: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.model == model && a.split == split && a.metric == metric)
    }

    /// Per-repeat values of one metric, in repeat order; `None` where the
    /// model failed.
    pub fn values(&self, model: &str, split: SplitKind, metric: &str) -> Vec<Option<f64>> {
        self.records
            .iter()
            .filter(|r| r.model == model && r.split == split)
            .map(|r| {
                let m = r.metrics.as_ref()?;
                if metric == "prevalence" {
                    return Some(r.prevalence);
                }
                m.named().into_iter().find(|(n, _)| *n == metric).map(|(_, v)| v)
            })
            .collect()
    }

    /// Long-format CSV: `model,split_kind,seed,metric,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "split_kind", "seed", "metric", "value"])
            .map_err(csv_err)?;
        for r in &self.records {
            let Some(m) = &r.metrics else { continue };
            let seed = r.seed.to_string();
            let mut rows = vec![("prevalence", r.prevalence)];
            rows.extend(m.named());
            for (name, v) in rows {
                w.write_record([r.model.as_str(), r.split.as_str(), &seed, name, &v.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text mean ± SEM table, one row per model.
    pub fn table(&self) -> String {
        let cols: [(SplitKind, &str); 4] = [
            (SplitKind::SeenTest, "auprc"),
            (SplitKind::SeenTest, "hit_at_1pct"),
            (SplitKind::UnseenTest, "auprc"),
            (SplitKind::UnseenTest, "hit_at_1pct"),
        ];
        let width = self.models.iter().map(|m| m.len()).max().unwrap_or(5).max(5);
        let mut s = format!("{:width$}", "model");
        for (split, metric) in cols {
            s.push_str(&format!("  {:>24}", format!("{split}/{metric}")));
        }
        s.push('\n');
        for model in &self.models {
            s.push_str(&format!("{model:width$}"));
            for (split, metric) in cols {
                let cell = match self.aggregate(model, split, metric) {
                    Some(a) => match a.sem {
                        Some(e) => format!("{:.3} ± {:.3}", a.mean, e),
                        None => format!("{:.3} ± n/a", a.mean),
                    },
                    None => "failed".into(),
                };
                s.push_str(&format!("  {cell:>24}"));
            }
            s.push('\n');
        }
        s
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Seed of repeat `r` under `master`.
pub fn repeat_seed(master: u64, r: usize) -> u64 {
    Rng::derive(master, r as u64).next_u64()
}

/// Draws splits until both test sets contain both classes and the train
/// set is non-empty.
pub fn split_with_both_classes(labels: &LabeledEdges, seed: u64, attempts: usize) -> Result<BenchmarkSplit> {
    for a in 0..attempts.max(1) {
        let s = make_split(labels, Rng::derive(seed, a as u64).next_u64())?;
        if s.seen_test.has_both_classes() && s.unseen_test.has_both_classes() && !s.train.is_empty() {
            if a > 0 {
                warn!("split redrawn {a} time(s) to get both classes in each test set");
            }
            return Ok(s);
        }
    }
    Err(Error::DegenerateLabels(format!(
        "no split with both classes in each test set after {attempts} attempts"
    )))
}

/// Trains a variational model (or an ensemble of them) and returns its
/// `P x P` edge scores.
#[allow(clippy::too_many_arguments)]
pub fn fit_sem(
    variant: Variant,
    model: &ModelConfig,
    train: &TrainConfig,
    score: BcScore,
    members: usize,
    data: &Dataset,
    y: Option<&LabeledEdges>,
    seed: u64,
) -> Result<Matrix> {
    if variant.uses_embeddings() && data.embeddings.is_none() {
        return Err(Error::MissingInput(format!("{variant} needs gene embeddings")));
    }
    let seeds: Vec<u64> = (0..members.max(1) as u64).map(|j| Rng::derive(seed, 100 + j).next_u64()).collect();
    ensemble_scores(variant, &data.x, y, data.embeddings.as_ref(), data.regulators.as_deref(), model, train, score, &seeds)
}

/// Scores for the two test sets of one split.
fn score_model(spec: &ModelSpec, data: &Dataset, train: &LabeledEdges, tests: [&LabeledEdges; 2], seed: u64) -> Result<[Vec<f64>; 2]> {
    let p = data.n_genes();
    match spec {
        ModelSpec::Sem {
            variant,
            model,
            train: tcfg,
            score,
            members,
        } => {
            let y = variant.uses_labels().then_some(train);
            let s = fit_sem(*variant, model, tcfg, *score, *members, data, y, seed)?;
            Ok(tests.map(|t| t.gather(&s)))
        }
        ModelSpec::OneHotLr { config } => {
            let m = onehot_lr_train(train, p, config)?;
            Ok([onehot_lr_scores(&m, tests[0])?, onehot_lr_scores(&m, tests[1])?])
        }
        ModelSpec::MatComp { config } => {
            let m = matcomp_fit(train, p, config, seed)?;
            Ok([m.scores(tests[0])?, m.scores(tests[1])?])
        }
        ModelSpec::Random => Ok([
            random_scores(tests[0], Rng::derive(seed, 1).next_u64()),
            random_scores(tests[1], Rng::derive(seed, 2).next_u64()),
        ]),
    }
}

fn run_repeat(data: &Dataset, models: &[BenchModel], cfg: &BenchConfig, repeat: usize, seed: u64) -> Result<Vec<MetricRecord>> {
    let split = split_with_both_classes(&data.labels, seed, cfg.max_split_attempts)?;
    let train = if cfg.downsample {
        downsample_negatives(&split.train, Rng::derive(seed, 3).next_u64())?
    } else {
        split.train.clone()
    };
    let tests = [&split.seen_test, &split.unseen_test];
    let mut records = Vec::new();
    for model in models {
        let outcome = score_model(&model.spec, data, &train, tests, seed).and_then(|scores| {
            let probs = model.spec.emits_probabilities();
            Ok([
                Metrics::compute(&tests[0].labels(), &scores[0], probs)?,
                Metrics::compute(&tests[1].labels(), &scores[1], probs)?,
            ])
        });
        if let Err(e) = &outcome {
            warn!("model {} failed on repeat {repeat}: {e}", model.name);
        }
        for (idx, split_kind) in SplitKind::ALL.into_iter().enumerate() {
            let (metrics, error) = match &outcome {
                Ok(m) => (Some(m[idx].clone()), None),
                Err(e) => (None, Some(e.to_string())),
            };
            records.push(MetricRecord {
                model: model.name.clone(),
                split: split_kind,
                repeat,
                seed,
                n_edges: tests[idx].len(),
                prevalence: tests[idx].prevalence(),
                metrics,
                error,
            });
        }
    }
    info!("repeat {repeat} done");
    Ok(records)
}

/// Repeats split / train / score for every model and aggregates mean and
/// standard error per metric. A failing model only loses its own cells.
pub fn run_benchmark(data: &Dataset, models: &[BenchModel], cfg: &BenchConfig, master_seed: u64) -> Result<MetricsReport> {
    if cfg.n_repeats == 0 {
        return Err(Error::InvalidConfig("n_repeats must be >= 1".into()));
    }
    if models.is_empty() {
        return Err(Error::InvalidConfig("no models to benchmark".into()));
    }
    let mut names: Vec<String> = Vec::new();
    for m in models {
        if names.contains(&m.name) {
            return Err(Error::InvalidConfig(format!("duplicate model name {:?}", m.name)));
        }
        names.push(m.name.clone());
    }
    let job = |r: usize| run_repeat(data, models, cfg, r, repeat_seed(master_seed, r));
    let per_repeat: Vec<Vec<MetricRecord>> = if cfg.parallel {
        (0..cfg.n_repeats).into_par_iter().map(job).collect::<Result<_>>()?
    } else {
        (0..cfg.n_repeats).map(job).collect::<Result<_>>()?
    };
    let records = per_repeat.into_iter().flatten().collect();
    Ok(MetricsReport::from_records(master_seed, cfg.n_repeats, names, records))
}
