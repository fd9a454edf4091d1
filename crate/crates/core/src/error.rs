use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spin quantum number must be at least 1, got j = {0}")]
    SpinTooSmall(u32),

    #[error("eigenvalue modulus deviates from 1 by {deviation:e} (limit {limit:e})")]
    NonUnitary { deviation: f64, limit: f64 },

    #[error("eigensolver failed: {0}")]
    EigenSolver(String),

    #[error("eigenphases {index} and {next} are closer than {tolerance:e}")]
    DegenerateLevels {
        index: usize,
        next: usize,
        tolerance: f64,
    },

    #[error("need at least {required} values, got {got}")]
    TooFew { required: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("malformed eigenvector file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
