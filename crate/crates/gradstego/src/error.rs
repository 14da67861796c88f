use thiserror::Error;

/// Unified error type for the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed file contents (bad magic, bad header, wrong version tag).
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input that this implementation deliberately does not handle.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A pixel modification would leave the valid [0, 255] range.
    #[error("bounds error: {0}")]
    Bounds(String),

    /// Message too long for the cover at the requested code geometry.
    #[error("payload error: {0}")]
    Payload(String),

    /// Non-finite value produced where the contract requires finite arithmetic.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Instance too large for an exhaustive operation.
    #[error("size error: {0}")]
    Size(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
