//! Crate-wide error type.
//!
//! Every fallible operation returns [`Error`]; the CLI maps the variants onto
//! process exit codes (input/format problems vs. degraded results vs. bugs).

use thiserror::Error;

/// Unified error for estimators, calibration, streaming, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value was unusable (non-finite sample, bad parameter...).
    #[error("invalid input: {0}")]
    Input(String),

    /// An operation was invoked on an object in the wrong state.
    #[error("invalid state: {0}")]
    State(String),

    /// A data file could not be parsed (too many malformed rows, bad schema...).
    #[error("format error: {0}")]
    Format(String),

    /// The emulator was asked to inject a drift while one is already active.
    #[error("emulator busy: {0}")]
    Busy(String),

    /// The in-process bus has been closed.
    #[error("bus closed")]
    BusClosed,

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV-level failure that is not a recoverable malformed row.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for an [`Error::Input`] with a formatted message.
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Shorthand for an [`Error::State`] with a formatted message.
    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    /// Shorthand for an [`Error::Format`] with a formatted message.
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
