use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed data handed to an operation (unknown token id, bad sequence).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A parameter outside its domain or a dimension mismatch.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Training data problems such as an empty corpus.
    #[error("data error: {0}")]
    Data(String),

    /// The covariance state lost positive definiteness or symmetry.
    #[error("numerical state error: {0}")]
    NumericalState(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    /// A configuration field failed validation. `field` is a dotted path.
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("session is frozen")]
    Frozen,

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }
}
