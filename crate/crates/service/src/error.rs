use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    BadRequest(String),

    #[error("session {0} not found")]
    SessionNotFound(String),

    #[error("{0}")]
    NotFound(String),

    #[error("segmentation backend unavailable: {0}")]
    Unavailable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn status(&self) -> StatusCode {
        match self {
            Error::BadRequest(_) => StatusCode::BAD_REQUEST,
            Error::SessionNotFound(_) | Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            Error::Config(_) | Error::Internal(_) | Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<declutter_core::Error> for Error {
    fn from(e: declutter_core::Error) -> Self {
        use declutter_core::Error as E;
        match e {
            E::BackendUnavailable(msg) => Error::Unavailable(msg),
            E::Protocol(msg) => Error::Unavailable(format!("backend protocol error: {msg}")),
            E::InvalidArgument(msg) => Error::BadRequest(msg),
            E::Image(err) => Error::BadRequest(format!("could not decode image: {err}")),
            other => Error::Internal(other.to_string()),
        }
    }
}

impl From<declutter_models::Error> for Error {
    fn from(e: declutter_models::Error) -> Self {
        match e {
            declutter_models::Error::Core(inner) => inner.into(),
            other => Error::Internal(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Internal(format!("session record: {e}"))
    }
}

impl IntoResponse for Error {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}
