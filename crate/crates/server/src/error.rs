use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use querybuilder_core::Error;
use serde::{Deserialize, Serialize};

/// Error body returned by every failing endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    pub status: u16,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            code: code.to_string(),
            message: message.into(),
            status: status.as_u16(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn status(&self) -> StatusCode {
        StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }
}

/// Status and machine code for every core error.
pub fn classify(err: &Error) -> (StatusCode, &'static str) {
    use StatusCode as S;
    match err {
        Error::Io { .. } => (S::INTERNAL_SERVER_ERROR, "io_error"),
        Error::MalformedLine { .. } => (S::INTERNAL_SERVER_ERROR, "malformed_line"),
        Error::BadFormat { .. } => (S::INTERNAL_SERVER_ERROR, "bad_format"),
        Error::DuplicateDocId(_) => (S::CONFLICT, "duplicate_doc_id"),
        Error::UnknownSentence(_) => (S::NOT_FOUND, "unknown_sentence"),
        Error::UnknownItem(_) => (S::NOT_FOUND, "unknown_item"),
        Error::UnregisteredField(_) => (S::BAD_REQUEST, "unregistered_field"),
        Error::MissingFieldWeight(_) => (S::BAD_REQUEST, "missing_field_weight"),
        Error::EmptyQuery => (S::BAD_REQUEST, "empty_query"),
        Error::EmptyIndex => (S::SERVICE_UNAVAILABLE, "empty_index"),
        Error::InvalidConfig(_) => (S::BAD_REQUEST, "invalid_config"),
        Error::DimensionMismatch { .. } => (S::INTERNAL_SERVER_ERROR, "dimension_mismatch"),
        Error::ZeroVector => (S::INTERNAL_SERVER_ERROR, "zero_vector"),
        Error::NoExamples => (S::BAD_REQUEST, "no_examples"),
        Error::ProviderFailed { .. } => (S::BAD_GATEWAY, "provider_failed"),
        Error::ProviderUnreachable { .. } => (S::SERVICE_UNAVAILABLE, "provider_unreachable"),
        Error::MissingEmbedding(_) => (S::UNPROCESSABLE_ENTITY, "missing_embedding"),
        Error::SessionNotFound(_) => (S::NOT_FOUND, "session_not_found"),
        Error::SessionFrozen(_) => (S::CONFLICT, "session_frozen"),
        Error::EmptyNarrative(_) => (S::BAD_REQUEST, "empty_narrative"),
        Error::EmptySearchTerms => (S::BAD_REQUEST, "empty_search_terms"),
        Error::BadJudgmentLevel(_) => (S::BAD_REQUEST, "bad_judgment_level"),
        Error::EmptyRun => (S::BAD_REQUEST, "empty_run"),
        Error::Json(_) => (S::INTERNAL_SERVER_ERROR, "json_error"),
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let (status, code) = classify(&err);
        ApiError::new(status, code, err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}
