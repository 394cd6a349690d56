use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("{path}: line {line}: {msg}")]
    Record { path: PathBuf, line: u64, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Solver(#[from] proxline::Error),

    /// No solver converged on any problem, so no ratio is finite.
    #[error("no solver converged on any problem; the {metric} profile is empty")]
    EmptyProfile { metric: String },
}

impl BenchError {
    pub fn config(msg: impl Into<String>) -> Self {
        BenchError::Config(msg.into())
    }
}
