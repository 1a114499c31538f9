use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("axis {axis} out of range for tensor of rank {ndim}")]
    AxisOutOfRange { axis: usize, ndim: usize },

    #[error("cannot reduce over an empty axis")]
    EmptyAxis,

    #[error("activation tape does not match the current network parameters")]
    StaleTape,

    #[error("gradient vanished: {0}")]
    ZeroGradient(String),

    #[error("training diverged at step {step}: {what}")]
    Divergence { step: usize, what: String },

    #[error("sampling failed after {attempts} attempts: {what}")]
    SamplingFailed { attempts: usize, what: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {key}: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
