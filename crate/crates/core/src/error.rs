use std::io;
use thiserror::Error;

/// Error type shared by every module in this crate.
///
/// The variants map onto the CLI exit-code contract: `Config`/`Contract`
/// are usage errors, `Data`/`Io` are data errors, `Numeric` is a numerical
/// failure.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition of an operation was violated (shape mismatch,
    /// invalid argument).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration value or unknown configuration key.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent on-disk data.
    #[error("data error: {0}")]
    Data(String),

    /// Non-finite values, divergence, or a failed numerical diagnostic.
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
