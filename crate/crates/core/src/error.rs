use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite {what} at step {step} (coordinate {index})")]
    NonFinite {
        what: &'static str,
        step: u64,
        index: usize,
    },

    #[error("invalid `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("step {t} outside schedule range 1..={max}")]
    StepOutOfRange { t: u64, max: u64 },

    #[error("singular {mapping} mapping: {combination}")]
    Singular {
        mapping: &'static str,
        combination: String,
    },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
