use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid encoding: {0}")]
    InvalidEncoding(String),

    #[error("dimension mismatch: {context} (expected {expected}, found {found})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("similarity undefined: zero-norm angular vector")]
    UndefinedSimilarity,

    #[error("capacity exceeded: {found} qubits (max {max})")]
    Capacity { found: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: expected {expected}, found {found}")]
    Format { expected: String, found: String },

    #[error("truncated stream: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
