use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use nns_core::{Error, PipelineError, Stage};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Validation(Vec<FieldError>),
    /// The session exists but has not finished fitting.
    NotReady { status: &'static str },
    /// Fitting failed earlier; the stored failure is replayed.
    SessionFailed { stage: Stage, message: String },
    Pipeline { stage: Stage, message: String },
    Internal(String),
}

impl ApiError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError::Validation(vec![FieldError::new(field, message)])
    }

    /// Maps a pipeline failure onto request fields where one is to blame.
    /// `fields` renames core parameter names to request field names.
    pub fn from_pipeline(e: PipelineError, fields: &dyn Fn(Stage, &str) -> Option<String>) -> Self {
        let blamed = match &e.source {
            Error::InvalidParameter { name, message } => fields(e.stage, name).map(|f| (f, message.clone())),
            Error::Cutoff { .. } => fields(e.stage, "high_cut_hz").map(|f| (f, e.source.to_string())),
            _ => None,
        };
        match blamed {
            Some((field, message)) => ApiError::field(field, message),
            None => ApiError::Pipeline {
                stage: e.stage,
                message: e.source.to_string(),
            },
        }
    }
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    status: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fields: Option<&'a [FieldError]>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let empty = Body {
            error: "",
            message: None,
            stage: None,
            status: None,
            fields: None,
        };
        let (code, body) = match &self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, Body { error: "not_found", message: Some(m), ..empty }),
            ApiError::Validation(f) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                Body { error: "validation", fields: Some(f), ..empty },
            ),
            ApiError::NotReady { status } => (
                StatusCode::CONFLICT,
                Body { error: "not_ready", status: Some(status), ..empty },
            ),
            ApiError::SessionFailed { stage, message } => (
                StatusCode::CONFLICT,
                Body { error: "session_failed", stage: Some(*stage), message: Some(message), ..empty },
            ),
            ApiError::Pipeline { stage, message } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                Body { error: "pipeline", stage: Some(*stage), message: Some(message), ..empty },
            ),
            ApiError::Internal(m) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                Body { error: "internal", message: Some(m), ..empty },
            ),
        };
        crate::json_response(code, &body)
    }
}
