use std::path::PathBuf;

use jointloc_core::{ModelError, SolverError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("invalid scenario: {0}")]
    Model(#[from] ModelError),

    #[error("metrics file: {0}")]
    Csv(#[from] csv::Error),

    #[error("metrics file: {0}")]
    Metrics(String),

    #[error("json output: {0}")]
    Json(#[source] serde_json::Error),

    #[error("solver: {0}")]
    Solver(#[from] SolverError),

    #[error("invalid experiment configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
