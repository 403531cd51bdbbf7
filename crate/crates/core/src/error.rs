use thiserror::Error;

/// Errors raised by sketch construction, ingestion and decoding.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for universe of size {n}")]
    IndexOutOfRange { index: u64, n: usize },

    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("exhaustive check refused: {subsets} subsets exceeds the limit of {limit}")]
    TooManySubsets { subsets: u128, limit: u128 },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("strict turnstile violation: {0}")]
    StrictViolation(String),

    #[error("sketch does not belong to this matrix (fingerprint {got:#018x}, expected {expected:#018x})")]
    SketchMismatch { expected: u64, got: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
