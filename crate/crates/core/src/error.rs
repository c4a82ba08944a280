//! Error type shared across the library.

use thiserror::Error;

/// Errors produced by cube construction, operators, solvers, and persistence.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or layout inconsistency (zero dimension, mismatched shapes,
    /// non-divisible decimation targets).
    #[error("shape error: {0}")]
    Shape(String),

    /// A parameter outside its documented domain.
    #[error("parameter error: {0}")]
    Param(String),

    /// An iterative solver diverged or was asked to solve a singular system.
    /// `trace` holds the recorded objective values up to the failure.
    #[error("solver error: {message}")]
    Solver { message: String, trace: Vec<f64> },

    /// A NaN or infinity appeared where only finite values are allowed.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A persisted file failed validation. `offset` is the byte offset of the
    /// first invalid content when known.
    #[error("format error: {message}")]
    Format { message: String, offset: Option<u64> },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub fn solver(msg: impl Into<String>, trace: Vec<f64>) -> Self {
        Error::Solver { message: msg.into(), trace }
    }

    pub fn format(msg: impl Into<String>, offset: Option<u64>) -> Self {
        Error::Format { message: msg.into(), offset }
    }
}
