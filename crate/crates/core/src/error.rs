use std::io;

use thiserror::Error;

/// Errors raised by the simulator, protocol functions and config loader.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or unknown configuration key/value. `line` is 0 when the
    /// problem was detected after parsing (cross-key validation).
    #[error("config error at line {line}, key `{key}`: {message}")]
    Config {
        key: String,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("causality violation: arrival {arrival} precedes submission round start {round_start}")]
    Causality { arrival: f64, round_start: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("output error: {0}")]
    Output(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            line: 0,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
