use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use proactive_core::error::{ConfigError, SessionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    BadState,
    StalePreview,
    UnsupportedInCondition,
    ProviderUnavailable,
    RunnerUnavailable,
    Validation,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::BadState | ErrorCode::StalePreview | ErrorCode::UnsupportedInCondition => StatusCode::CONFLICT,
            ErrorCode::Validation => StatusCode::BAD_REQUEST,
            ErrorCode::ProviderUnavailable | ErrorCode::RunnerUnavailable => StatusCode::SERVICE_UNAVAILABLE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(ErrorCode::NotFound, format!("session `{id}` not found"))
    }

    pub fn session_closed() -> Self {
        Self::new(ErrorCode::BadState, "session is closed")
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::NotFound { .. } => ErrorCode::NotFound,
            SessionError::BadState(_) | SessionError::OutOfOrder(_) => ErrorCode::BadState,
            // the log is gone, so nothing more can be recorded
            SessionError::TelemetryUnavailable(_) => ErrorCode::BadState,
            SessionError::StalePreview(_) => ErrorCode::StalePreview,
            SessionError::Unsupported { .. } => ErrorCode::UnsupportedInCondition,
            SessionError::Validation(_) => ErrorCode::Validation,
            SessionError::Config(c) => return c.clone().into(),
            SessionError::RunnerUnavailable => ErrorCode::RunnerUnavailable,
            SessionError::ProviderUnavailable(_) => ErrorCode::ProviderUnavailable,
        };
        Self::new(code, e.to_string())
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        Self::new(ErrorCode::Validation, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}
