use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("window [{start}, {start}+{length}) out of range for series of length {len}")]
    Bounds { start: usize, length: usize, len: usize },

    #[error("operation not defined for model {0}")]
    WrongFamily(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("misaligned series: {0}")]
    Alignment(String),

    #[error("invalid plan: {0}")]
    Plan(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
