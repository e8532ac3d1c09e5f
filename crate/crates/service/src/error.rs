use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use lesionbench_core::Error as CoreError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("no lesion found")]
    NoLesion(String),

    #[error("{0}")]
    Conflict(String),

    #[error("{stage}: {message}")]
    Pipeline { stage: String, message: String },
}

impl ApiError {
    pub fn not_found(what: &str, id: &str) -> Self {
        ApiError::NotFound(format!("unknown {what} {id:?}"))
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NoLesion(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Pipeline { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Maps a pipeline failure; the stage is the outermost error context.
    pub fn from_pipeline(err: CoreError) -> Self {
        match err.root() {
            CoreError::NoLesion(detail) => ApiError::NoLesion(detail.clone()),
            CoreError::Index(_) => ApiError::BadRequest(err.to_string()),
            root => {
                let stage = match &err {
                    CoreError::Context { context, .. } => context.clone(),
                    _ => "pipeline".to_string(),
                };
                ApiError::Pipeline { stage, message: root.to_string() }
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match &self {
            ApiError::NoLesion(detail) => json!({ "error": self.to_string(), "detail": detail }),
            ApiError::Pipeline { stage, .. } => {
                json!({ "error": self.to_string(), "stage": stage })
            }
            _ => json!({ "error": self.to_string() }),
        };
        (self.status(), Json(body)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_statuses() {
        let e = ApiError::from_pipeline(CoreError::NoLesion("empty".into()).context("initial slice"));
        assert_eq!(e.status(), StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(e.to_string(), "no lesion found");

        let e = ApiError::from_pipeline(CoreError::contract("bad band").context("propagation"));
        assert_eq!(e.status(), StatusCode::INTERNAL_SERVER_ERROR);
        assert!(matches!(&e, ApiError::Pipeline { stage, .. } if stage == "propagation"));

        let e = ApiError::from_pipeline(CoreError::contract("x"));
        assert!(matches!(&e, ApiError::Pipeline { stage, .. } if stage == "pipeline"));
    }
}
