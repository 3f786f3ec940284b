//! Error taxonomy. Two classes matter downstream: validation errors (bad
//! inputs, bad files, bad config) and numeric/runtime errors (divergence,
//! non-convergence). The CLI maps them to exit codes 1 and 2.

use std::path::Path;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {place}: expected {expected}, got {got}")]
    DimMismatch {
        place: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{0}")]
    Validation(String),

    /// Numeric failure at run time (training divergence, iteration limits).
    #[error("{0}")]
    Numeric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dim(place: &str, expected: usize, got: usize) -> Self {
        Error::DimMismatch {
            place: place.to_string(),
            expected,
            got,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn csv(path: impl AsRef<Path>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for anything the user can fix in
    /// their inputs, 2 for numeric failures during a run.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Numeric(_) => 2,
            _ => 1,
        }
    }
}
