use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite value encountered {0}")]
    NonFinite(String),

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("loss is undefined: {0}")]
    UndefinedLoss(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("missing model for method {0}")]
    MissingModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
