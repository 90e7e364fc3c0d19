use std::path::PathBuf;

use thiserror::Error;

/// Failures of the experiment harness.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("row {row}, column {col}: cannot parse {text:?} as a number")]
    Parse { row: usize, col: usize, text: String },
    #[error("row {row}, column {col}: non-finite value {value}")]
    NonFinite { row: usize, col: usize, value: f64 },
    #[error("row {row}: expected {expected} fields, found {got}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] dshap_core::Error),
    #[error("serialization: {0}")]
    Serialize(String),
}

impl BenchError {
    /// Short stable tag used in the one-line CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            BenchError::Io { .. } => "io",
            BenchError::Csv { .. } => "csv",
            BenchError::Parse { .. } => "parse",
            BenchError::NonFinite { .. } => "non_finite",
            BenchError::Ragged { .. } => "ragged",
            BenchError::Config(_) => "config",
            BenchError::Core(_) => "numeric",
            BenchError::Serialize(_) => "serialize",
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub(crate) fn config_err(msg: impl Into<String>) -> BenchError {
    BenchError::Config(msg.into())
}
