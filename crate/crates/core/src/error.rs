use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid exponent {0}: exponents must be finite and >= 0")]
    InvalidExponent(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("signal is not persistently exciting at this window (epsilon = 0)")]
    NotPersistentlyExciting,

    #[error("not a fixed-time configuration: {0}")]
    NotFixedTime(String),

    #[error("non-finite state at step {step} (t = {time}): |state| = {norm}")]
    NonFinite { step: usize, time: f64, norm: f64 },

    #[error("{field}: {message}")]
    Config { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures raised while integrating, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}
