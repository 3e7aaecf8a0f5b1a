use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty scene: at least one element is required")]
    EmptyScene,

    #[error("segmentation backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("segmentation backend protocol error: {0}")]
    Protocol(String),

    #[error("image codec error: {0}")]
    Image(#[from] ::image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub(crate) fn ensure_dims(
    what: &str,
    expected: (usize, usize),
    actual: (usize, usize),
) -> Result<()> {
    if expected != actual {
        return Err(Error::invalid(format!(
            "{what}: expected {}x{}, got {}x{}",
            expected.0, expected.1, actual.0, actual.1
        )));
    }
    Ok(())
}
