use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("truncation mismatch: {0} vs {1}")]
    TruncationMismatch(usize, usize),

    #[error("non-finite base kernel value at knot pair ({i}, {j})")]
    NonFiniteKernel { i: usize, j: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gram matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e}); apply the psd shift before training")]
    NotPsd { min_eigenvalue: f64 },

    #[error("solver did not converge within {0} iterations")]
    NotConverged(usize),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("both classes are required: {0}")]
    SingleClass(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("cannot stratify: {0}")]
    Stratification(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
