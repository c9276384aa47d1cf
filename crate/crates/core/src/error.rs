use thiserror::Error;

/// Errors raised by the tailgan library.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument is malformed (wrong count, dimension mismatch, bad option).
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// The conditional excess distribution is undefined because no sample
    /// exceeds the threshold.
    #[error("no sample exceeds threshold {threshold}")]
    UndefinedConditional { threshold: f64 },

    #[error("data format error: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// True for errors caused by unreadable or malformed input data, as
    /// opposed to bad arguments or configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Csv(_)
                | Error::Format(_)
                | Error::InsufficientData { .. }
                | Error::UndefinedConditional { .. }
                | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
