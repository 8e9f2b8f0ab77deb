use std::fmt;

use grnsem::Error;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Bad inputs and configuration exit 2; failures during computation or
/// while writing exit 1.
impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidConfig(_)
            | Error::InvalidScale(_)
            | Error::MissingInput(_)
            | Error::TooFewGenes { .. }
            | Error::Parse { .. }
            | Error::EmptyFile(_)
            | Error::DuplicateGene(_)
            | Error::UnknownGene(_)
            | Error::DuplicateEdge { .. }
            | Error::InvalidLabel(_)
            | Error::MissingGeneEmbedding(_)
            | Error::NegativeValueWithLog1p { .. }
            | Error::SchemaVersionMismatch(_)
            | Error::DimensionMismatch(_)
            | Error::IndexOutOfRange { .. } => EXIT_USAGE,
            Error::SingularMatrix { .. }
            | Error::NonFiniteValue(_)
            | Error::UnregisteredPrimitive(_)
            | Error::DegenerateLabels(_)
            | Error::DegenerateInput(_)
            | Error::Io(_)
            | Error::Json(_) => EXIT_RUNTIME,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::runtime(e.to_string())
    }
}
