use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular (pivot {pivot:e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("scale must be positive, got {0}")]
    InvalidScale(f64),

    #[error("non-finite value in {0}")]
    NonFiniteValue(String),

    #[error("primitive `{0}` has no registered adjoint")]
    UnregisteredPrimitive(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("index {index} out of range for {len} genes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("too few genes to split: {tfs} TFs and {tgs} TGs with labels (need at least 4 of each)")]
    TooFewGenes { tfs: usize, tgs: usize },

    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),

    #[error("input is degenerate: {0}")]
    DegenerateInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0} is empty")]
    EmptyFile(PathBuf),

    #[error("duplicate gene `{0}`")]
    DuplicateGene(String),

    #[error("unknown gene `{0}`")]
    UnknownGene(String),

    #[error("duplicate edge {tf} -> {tg}")]
    DuplicateEdge { tf: String, tg: String },

    #[error("invalid label `{0}` (expected 0 or 1)")]
    InvalidLabel(String),

    #[error("no embedding for {} gene(s): {}", .0.len(), .0.join(", "))]
    MissingGeneEmbedding(Vec<String>),

    #[error("log1p requested but gene `{gene}` has negative value {value}")]
    NegativeValueWithLog1p { gene: String, value: f64 },

    #[error("report schema mismatch: {0}")]
    SchemaVersionMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
