use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum KrvError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no instances")]
    NoInstances,
    #[error("ragged row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-numeric value {value:?} in numeric column {column} (row {row})")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("missing value in column {column} (row {row})")]
    MissingValue { row: usize, column: usize },
    #[error("label column {0} not found")]
    LabelColumn(String),
    #[error("labels contain a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, KrvError>;

impl KrvError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KrvError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        KrvError::InvalidParameter(msg.into())
    }
}
