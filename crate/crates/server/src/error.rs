use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use specshape::apps::AppError;
use specshape::neural::NeuralError;
use specshape::spectral_ae::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    /// Malformed body, wrong lengths, out-of-range parameters.
    #[error("{message}")]
    BadRequest { field: Option<String>, message: String },
    /// The request was well formed but the computation failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("no model loaded")]
    NotLoaded,
    #[error("no sample dataset loaded")]
    NoSamples,
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn field(field: &str, message: impl Into<String>) -> ApiError {
        ApiError::BadRequest {
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest { .. } => StatusCode::BAD_REQUEST,
            ApiError::Numerical(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::NotLoaded | ApiError::NoSamples => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let field = match &self {
            ApiError::BadRequest { field, .. } => field.clone(),
            _ => None,
        };
        let body = json!({
            "error": {
                "status": status.as_u16(),
                "field": field,
                "message": self.to_string(),
            }
        });
        (status, Json(body)).into_response()
    }
}

fn bad(message: String) -> ApiError {
    ApiError::BadRequest { field: None, message }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::KMismatch { .. }
            | ModelError::DimMismatch { .. }
            | ModelError::InvalidConfig(_)
            | ModelError::Geometry(_) => bad(e.to_string()),
            ModelError::Neural(NeuralError::ShapeMismatch { .. } | NeuralError::EmptySet) => bad(e.to_string()),
            other => ApiError::Numerical(other.to_string()),
        }
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Model(m) => m.into(),
            AppError::InvalidArgument(_) | AppError::WrongModelKind { .. } | AppError::Geometry(_) => bad(e.to_string()),
            AppError::Eigen(_) | AppError::Diverged { .. } | AppError::Degenerate(_) => ApiError::Numerical(e.to_string()),
        }
    }
}
