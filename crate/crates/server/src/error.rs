use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use relaq_core::datamodel::DataError;
use relaq_core::matcher::MatchError;
use relaq_core::querymodel::QueryError;
use relaq_core::recommender::RecommendError;
use relaq_core::store::StoreError;
use relaq_core::wire::ErrorBody;

/// An error response: status plus the shared error body.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &str, detail: impl Into<String>) -> Self {
        Self { status, body: ErrorBody::new(error, detail) }
    }

    pub fn bad_request(error: &str, detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error, detail)
    }

    pub fn not_found(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", detail)
    }

    pub fn internal(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<DataError> for ApiError {
    fn from(e: DataError) -> Self {
        let mut err = Self::bad_request(e.code(), e.to_string());
        err.body.row = e.row();
        err
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let QueryError::SchemaViolation { path, message } = e;
        let mut err = Self::bad_request("SchemaViolation", message);
        err.body.path = Some(path);
        err
    }
}

impl From<MatchError> for ApiError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::Invalid(diagnostics) => {
                let code = diagnostics.first().map(|d| format!("{:?}", d.code)).unwrap_or_else(|| "InvalidQuery".into());
                let detail = diagnostics.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
                let mut err = Self::bad_request(&code, detail);
                err.body.path = diagnostics.first().map(|d| d.path.clone());
                err.body.diagnostics = diagnostics;
                err
            }
            MatchError::Index(e) => Self::new(StatusCode::SERVICE_UNAVAILABLE, "IndexUnavailable", e.to_string()),
            MatchError::UnknownSeries(_) => Self::bad_request("UnknownSeries", e.to_string()),
            MatchError::WindowTooLong { .. } => Self::bad_request("WindowTooLong", e.to_string()),
            MatchError::DegenerateSketch => Self::bad_request("InvalidSketch", e.to_string()),
            MatchError::LengthMismatch { .. } => Self::internal(e.to_string()),
        }
    }
}

impl From<RecommendError> for ApiError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::FocusUnresolved(_) => Self::new(StatusCode::CONFLICT, "FocusUnresolved", e.to_string()),
            RecommendError::UnknownFocus(_) => {
                let mut err = Self::bad_request("UnknownFocus", e.to_string());
                err.body.path = Some("/focus".into());
                err
            }
            RecommendError::Match(e) => e.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Stale(_) => Self::new(StatusCode::CONFLICT, "StaleArtifacts", e.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}
