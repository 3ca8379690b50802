use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation
    /// (non-finite input, negative time, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration: empty dataset, degenerate parameters, ...
    #[error("configuration error: {0}")]
    Config(String),

    /// Inconsistent shapes between weights, architectures or codes.
    #[error("structural error: {0}")]
    Shape(String),

    /// A discrete-time update produced a non-finite value.
    #[error("numerical overflow at step {step}")]
    OverflowAtStep { step: u64 },

    /// A continuous-time integration produced a non-finite value.
    #[error("numerical overflow at time {time}")]
    OverflowAtTime { time: f64 },

    /// A requested time or grid is not covered by the available data.
    #[error("range error: {0}")]
    Range(String),

    /// Malformed text container input.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for the two overflow variants.
    pub fn is_overflow(&self) -> bool {
        matches!(self, Error::OverflowAtStep { .. } | Error::OverflowAtTime { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
