use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use policyscope::clustering::ClusterError;
use policyscope::forecast::ForecastError;
use policyscope::rt::RtError;
use policyscope::whatif::ScenarioError;
use policyscope::Error;

/// Error response with body `{"error": {"code", "message"}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code: "bad_request", message: message.into() }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self { status: StatusCode::NOT_FOUND, code: "not_found", message: message.into() }
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self { status: StatusCode::UNPROCESSABLE_ENTITY, code: "unprocessable", message: message.into() }
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self { status: StatusCode::CONFLICT, code: "conflict", message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { status: StatusCode::INTERNAL_SERVER_ERROR, code: "internal", message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        ApiError::bad_request(rejection.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(rejection: QueryRejection) -> Self {
        ApiError::bad_request(rejection.body_text())
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let message = err.to_string();
        match err {
            Error::Data(_) | Error::Config(_) | Error::Neural(_) => ApiError::bad_request(message),
            Error::UnknownCountry(_) => ApiError::not_found(message),
            Error::InsufficientData(_) => ApiError::unprocessable(message),
            Error::Rt(RtError::Estimator(_) | RtError::Index { .. }) => ApiError::unprocessable(message),
            Error::Rt(_) => ApiError::bad_request(message),
            Error::Cluster(ClusterError::UnknownCountry(_)) => ApiError::not_found(message),
            Error::Cluster(ClusterError::Rt { .. }) => ApiError::unprocessable(message),
            Error::Cluster(_) => ApiError::bad_request(message),
            Error::Forecast(ForecastError::Forecast(_) | ForecastError::Dataset(_)) => ApiError::unprocessable(message),
            Error::Forecast(ForecastError::Training(_)) => ApiError::unprocessable(message),
            Error::Forecast(_) => ApiError::bad_request(message),
            Error::Scenario(ScenarioError::Validation(_)) => ApiError::bad_request(message),
            Error::Scenario(ScenarioError::Forecast { .. }) => ApiError::unprocessable(message),
        }
    }
}
