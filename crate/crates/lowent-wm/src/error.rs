//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by models, watermarking, detection, training and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied data violates a precondition (bad token id, empty
    /// prefix, negative probability mass, ragged rows, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A configuration value is outside its valid range or the combination
    /// of settings is unusable (e.g. degenerate green-list size).
    #[error("config error: {0}")]
    Config(String),

    /// A file could not be parsed in the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// Not enough scorable material to form a statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Training could not proceed (single-class dataset, empty split, ...).
    #[error("training error: {0}")]
    Training(String),

    /// A scorer failed while the threshold navigator was walking its grid.
    #[error("navigation failed at tau={tau}: {source}")]
    Navigation {
        tau: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn training(msg: impl Into<String>) -> Self {
        Error::Training(msg.into())
    }
}
