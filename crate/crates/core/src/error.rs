use thiserror::Error;

/// Errors produced anywhere in the estimation toolchain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("clip too short: {0}")]
    ClipTooShort(String),

    #[error("{0}")]
    Format(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("unsupported case: {0}")]
    UnsupportedCase(String),

    #[error("invalid synthesis parameters: {0}")]
    Synth(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
