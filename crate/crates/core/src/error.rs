use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps these onto exit codes: usage problems exit 1, everything
/// here (data, numeric, I/O) exits 2.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or parameter shapes do not conform.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid model or training configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or insufficient input data.
    #[error("data error: {0}")]
    Data(String),

    /// Non-finite values or other numeric breakdown.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Checkpoint file rejected (version, names, shapes, or syntax).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
