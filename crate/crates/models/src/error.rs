use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty scene: at least one element is required")]
    EmptyScene,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(declutter_core::Error),
}

impl From<declutter_core::Error> for Error {
    fn from(e: declutter_core::Error) -> Self {
        match e {
            declutter_core::Error::EmptyScene => Error::EmptyScene,
            declutter_core::Error::InvalidArgument(msg) => Error::InvalidArgument(msg),
            other => Error::Core(other),
        }
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
