use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown split value `{0}` (expected `train` or `test`)")]
    UnknownSplit(String),

    #[error("unknown narrative id `{0}`")]
    UnknownNarrative(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("aggregate of hypothetical embeddings has zero norm")]
    DegenerateAggregate,

    #[error("metric undefined for narrative `{0}`: no relevant documents")]
    UndefinedMetric(String),

    #[error("model tag mismatch: index built with `{index}`, vectors from `{other}`")]
    ModelTagMismatch { index: String, other: String },

    #[error("provider request failed after {attempts} attempt(s): {message}")]
    Provider { attempts: u32, message: String },

    #[error("extraction failed: {message}")]
    Extraction { message: String, raw: String },

    #[error("template is missing the `{0}` placeholder")]
    MissingPlaceholder(&'static str),

    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Provider { .. } | Error::Extraction { .. } => 3,
            Error::Invariant(_)
            | Error::ModelTagMismatch { .. }
            | Error::DimensionMismatch { .. } => 4,
            _ => 2,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Provider { .. })
    }
}
