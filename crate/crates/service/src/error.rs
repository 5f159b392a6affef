use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ccid_core::Error;
use serde::Serialize;

/// Longest stderr excerpt returned to clients.
const STDERR_EXCERPT: usize = 2000;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub stderr: Option<String>,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    stderr: Option<&'a str>,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            stderr: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

fn excerpt(s: &str) -> String {
    if s.len() <= STDERR_EXCERPT {
        return s.to_string();
    }
    let mut end = s.len() - STDERR_EXCERPT;
    while !s.is_char_boundary(end) {
        end += 1;
    }
    format!("...{}", &s[end..])
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Format { .. } | Error::Parse(_) | Error::InvalidParameter(_) => StatusCode::BAD_REQUEST,
            Error::DimensionMismatch { .. } | Error::TooSmall { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::External { .. } => StatusCode::BAD_GATEWAY,
            Error::Unavailable(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let stderr = match &e {
            Error::External { stderr, .. } if !stderr.is_empty() => Some(excerpt(stderr)),
            _ => None,
        };
        Self {
            status,
            message: e.to_string(),
            stderr,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: &self.message,
            stderr: self.stderr.as_deref(),
        };
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
