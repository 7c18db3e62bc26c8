use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("shape mismatch at {context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: String,
        found: String,
    },

    #[error("record {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },

    #[error("category `{category}` has {available} {source_kind} samples, {required} required")]
    InsufficientSamples {
        category: String,
        source_kind: String,
        available: usize,
        required: usize,
    },

    #[error("architecture mismatch for adapter `{adapter}`: {details}")]
    Architecture { adapter: String, details: String },

    #[error("unknown backbone adapter `{0}`")]
    UnknownAdapter(String),

    #[error("zero-norm feature vector, cosine similarity undefined")]
    ZeroNorm,

    #[error("non-finite {term} loss at epoch {epoch}, step {step}")]
    NonFinite {
        term: String,
        epoch: usize,
        step: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl std::fmt::Debug,
        found: impl std::fmt::Debug,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: format!("{expected:?}"),
            found: format!("{found:?}"),
        }
    }

    /// Process exit code for the command-line surface: 3 for numeric
    /// failures, 2 for everything caused by bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
