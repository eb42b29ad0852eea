use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the analyzer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed header: {message}")]
    MalformedHeader { path: PathBuf, message: String },

    #[error("{path}: {message} at (row {row}, col {col})")]
    BadCell {
        path: PathBuf,
        row: usize,
        col: usize,
        message: String,
    },

    #[error("{context}: duplicate id `{id}`")]
    DuplicateId { context: String, id: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown gene set `{0}`")]
    UnknownGeneSet(String),

    #[error("cell line `{cell_line}` is absent from the {feature_type} matrix")]
    MissingCellLine {
        cell_line: String,
        feature_type: String,
    },

    #[error("column mismatch: missing {missing:?}, unexpected {unexpected:?}")]
    ColumnMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{solver} did not converge after {iterations} iterations")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
    },

    #[error("R² is undefined: the true responses are constant")]
    UndefinedMetric,

    #[error("config: {0}")]
    Config(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
