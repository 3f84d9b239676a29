use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use duelsteer_core::Error;
use serde::Serialize;

/// An error response: `{code, message, field?}` with its HTTP status.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>, field: Option<&str>) -> Self {
        ApiError { status, code, message: message.into(), field: field.map(str::to_owned) }
    }

    pub fn bad_request(message: impl Into<String>, field: Option<&str>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message, field)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message, None)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "pending_pair", message, None)
    }

    pub fn gone(message: impl Into<String>) -> Self {
        Self::new(StatusCode::GONE, "already_judged", message, None)
    }

    pub fn unprocessable(message: impl Into<String>, field: &str) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_value", message, Some(field))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, None)
    }

    pub fn internal_from(e: Error) -> Self {
        Self::internal(e.to_string())
    }

    pub fn storage(e: Error) -> Self {
        Self::new(StatusCode::INSUFFICIENT_STORAGE, "storage_failure", e.to_string(), None)
    }

    /// Config parsing, validation or model construction failed.
    pub fn from_config(e: Error) -> Self {
        let field = match &e {
            Error::Config { field, .. } => field.clone(),
            Error::Io { .. } | Error::Format { .. } | Error::Data(_) => "model".to_owned(),
            _ => "$".to_owned(),
        };
        ApiError { status: StatusCode::BAD_REQUEST, code: "invalid_config", message: e.to_string(), field: Some(field) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}
