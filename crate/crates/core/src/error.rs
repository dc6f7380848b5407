use std::path::PathBuf;

use crate::sampling::{PoolQuality, SamplePool};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error(
        "pool optimizer did not converge after {iterations} iterations \
         (mean error {:.3e}, cov error {:.3e})",
        quality.mean_error,
        quality.cov_error
    )]
    NotConverged {
        iterations: usize,
        best: Box<SamplePool>,
        quality: PoolQuality,
    },

    #[error("malformed pool file, field `{field}`: {reason}")]
    PoolFormat { field: &'static str, reason: String },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:.3e}")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("matrix is not symmetric: max asymmetry {asymmetry:.3e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("non-finite cost {value} for sample {index}")]
    NonFiniteCost { index: usize, value: f64 },

    #[error("all {count} rollouts failed")]
    AllRolloutsFailed { count: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
