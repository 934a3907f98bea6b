//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by prediction, attribution, training and file handling.
#[derive(Debug, Error)]
pub enum Error {
    /// An input or parameter tensor does not have the expected shape.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {0}")]
    Numeric(String),

    /// Invalid configuration or argument.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The requested fusion configuration is structurally disallowed.
    #[error("rejected configuration {0}: no pair crosses modalities")]
    RejectedConfiguration(String),

    /// A partition part or class index lies outside its domain.
    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    /// Exhaustive enumeration was requested for too many players.
    #[error("game with {0} players exceeds the enumeration bound of {max}", max = crate::oracle::MAX_PLAYERS)]
    TooManyPlayers(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl std::fmt::Debug,
        actual: impl std::fmt::Debug,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }
}
