use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error(
        "rank-deficient input: column {column} is (numerically) dependent on the previous ones"
    )]
    RankDeficient { column: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    Asymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("closed loop is unstable (spectral radius {radius:.6})")]
    Unstable { radius: f64 },

    #[error("Riccati iteration did not converge after {iterations} iterations; (A, B) is likely not stabilizable")]
    NotStabilizable { iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis construction failed: {0}")]
    Builder(String),

    #[error("bisection failed: {0}")]
    Bisection(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }
}
