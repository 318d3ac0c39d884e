use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use ebn::error::Error;

/// Errors returned by the HTTP API. Bodies carry the same kinds and codes as
/// the command-line exit taxonomy.
#[derive(Debug)]
pub enum ApiError {
    Core(Error),
    UnknownSession(String),
    UnknownScenario(String),
    BadRequest(String),
    Internal(String),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Core(e)
    }
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession(_) | ApiError::UnknownScenario(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Core(e) => match e {
                Error::Conflict(_) => StatusCode::CONFLICT,
                Error::InconsistentEvidence(_) => StatusCode::UNPROCESSABLE_ENTITY,
                Error::UnknownNode(_) => StatusCode::NOT_FOUND,
                Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::BAD_REQUEST,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ApiError::Core(e) => e.kind(),
            ApiError::UnknownSession(_) => "unknown_session",
            ApiError::UnknownScenario(_) => "unknown_scenario",
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Internal(_) => "internal_error",
        }
    }

    pub fn code(&self) -> i32 {
        match self {
            ApiError::Core(e) => e.code(),
            _ => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            ApiError::Core(e) => e.to_string(),
            ApiError::UnknownSession(id) => format!("no session `{id}`"),
            ApiError::UnknownScenario(n) => format!("unknown scenario `{n}`"),
            ApiError::BadRequest(m) | ApiError::Internal(m) => m.clone(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "error": { "kind": self.kind(), "code": self.code(), "message": self.message() }
        });
        (self.status(), Json(body)).into_response()
    }
}
