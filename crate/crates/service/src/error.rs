use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use neyman_core::Error;
use serde::{Deserialize, Serialize};

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                detail: serde_json::Value::Null,
            },
        }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.body.detail = detail;
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("{what} {id} not found"))
    }

    pub fn invalid_json(e: serde_json::Error) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "InvalidJson", e.to_string())
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::InfeasibleConfig(link) => Self::new(StatusCode::BAD_REQUEST, "InfeasibleConfig", message)
                .with_detail(serde_json::json!({ "violation": link })),
            Error::WrongStage(_) | Error::IncompleteExperiment { .. } => {
                Self::new(StatusCode::CONFLICT, "WrongStage", message)
            }
            Error::CountMismatch {
                expected_t1,
                expected_t0,
                got_t1,
                got_t0,
            } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "CountMismatch", message).with_detail(
                serde_json::json!({
                    "expected": { "treated": expected_t1, "control": expected_t0 },
                    "got": { "treated": got_t1, "control": got_t0 },
                }),
            ),
            Error::Io(_) => Self::internal(message),
            Error::InvalidSpec(_) | Error::Parse { .. } => Self::new(StatusCode::BAD_REQUEST, "InvalidSpec", message),
            _ => Self::new(StatusCode::BAD_REQUEST, "InvalidArgument", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
