use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("radii must be strictly increasing (r[{index}] = {prev}, r[{next_index}] = {next})", next_index = index + 1)]
    NonIncreasingRadii { index: usize, prev: f64, next: f64 },
    #[error("a single-point inner ring must sit at the origin (r1 = {0})")]
    OriginRule(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("harmonics were built for different channel or amplitude: {0}")]
    HarmonicsMismatch(String),
    #[error("insufficient Monte-Carlo samples: {0}")]
    InsufficientSamples(String),
    #[error("labeling error: {0}")]
    Labeling(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
