//! Local HTTP analysis service.
//!
//! Sessions are uploaded as trajectory CSV text and fitted in the background;
//! signals and reports are then computed on demand from the cached fits.
//!
//! | method | path | purpose |
//! |---|---|---|
//! | POST | `/sessions` | upload `{trajectory_csv, model?, fit?}` |
//! | GET | `/sessions/{id}` | session handle and status |
//! | GET | `/sessions/{id}/signal` | raw and optionally filtered displacement |
//! | POST | `/sessions/{id}/quantify` | NNS report for the given parameters |
//! | GET | `/annotation` | the 68 landmark ids with schematic coordinates |

mod error;
mod params;
mod store;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use nns_core::io;
use nns_core::layout::{region, schematic_point, Region};
use nns_core::pipeline::{analyze_fits, fits_document, PipelineConfig};
use nns_core::{fit_session, Execution, FitConfig, ShapeModel, Stage, JAW_TIP, LANDMARK_COUNT};
use serde::{Deserialize, Serialize};

pub use error::{ApiError, FieldError};
pub use params::{QuantifyRequest, SignalQuery};
pub use store::{Failure, SessionHandle, SessionStatus};

use store::{SessionRecord, Store};

/// Name of the built-in model used when a request names none.
pub const DEFAULT_MODEL: &str = "fixture";

/// Upload limit; a 30 fps trajectory runs to a few MB per minute.
pub const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;

/// The built-in synthetic shape model.
pub fn default_model() -> ShapeModel {
    ShapeModel::builtin()
}

pub struct AppState {
    models: BTreeMap<String, Arc<ShapeModel>>,
    store: Store,
}

impl AppState {
    /// Opens a service rooted at `workdir` with the given named models plus
    /// the built-in [`DEFAULT_MODEL`] unless overridden.
    pub fn open(workdir: &Path, models: BTreeMap<String, ShapeModel>) -> std::io::Result<Arc<Self>> {
        let mut models: BTreeMap<String, Arc<ShapeModel>> =
            models.into_iter().map(|(k, v)| (k, Arc::new(v))).collect();
        models
            .entry(DEFAULT_MODEL.to_owned())
            .or_insert_with(|| Arc::new(default_model()));
        Ok(Arc::new(Self {
            models,
            store: Store::open(workdir)?,
        }))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/signal", get(get_signal))
        .route("/sessions/{id}/quantify", post(quantify_session))
        .route("/annotation", get(annotation))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

pub(crate) fn json_response<T: Serialize>(code: StatusCode, body: &T) -> Response {
    match serde_json::to_string(body) {
        Ok(text) => (code, [(header::CONTENT_TYPE, "application/json")], text).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn json_text(code: StatusCode, text: String) -> Response {
    (code, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub trajectory_csv: String,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = params::parse_body(&body)?;
    let model_name = req.model.unwrap_or_else(|| DEFAULT_MODEL.to_owned());
    let model = state.models.get(&model_name).cloned().ok_or_else(|| {
        let known: Vec<&str> = state.models.keys().map(String::as_str).collect();
        ApiError::field("model", format!("unknown model `{model_name}`; available: {}", known.join(", ")))
    })?;
    let fit = req.fit.unwrap_or_default();
    fit.validate().map_err(|e| match e {
        nns_core::Error::InvalidParameter { name, message } => ApiError::field(format!("fit.{name}"), message),
        other => ApiError::field("fit", other.to_string()),
    })?;
    let session = io::parse_trajectory_str(&req.trajectory_csv)
        .and_then(|s| s.validate().map(|_| s))
        .map_err(|e| ApiError::field("trajectory_csv", e.to_string()))?;

    let handle = SessionHandle {
        session_id: uuid::Uuid::new_v4().simple().to_string(),
        status: SessionStatus::Uploaded,
        created_at_unix_ms: now_ms(),
        source_id: session.source_id.clone(),
        model: model_name,
        frame_count: session.frames.len(),
        sample_rate_hint: session.sample_rate_hint,
        fit,
        fitted_frames: None,
        error: None,
    };
    state
        .store
        .insert(handle.clone(), &session)
        .map_err(|e| ApiError::Internal(e.to_string()))?;

    let id = handle.session_id.clone();
    let task_state = state.clone();
    tokio::spawn(async move {
        let fitted = tokio::task::spawn_blocking(move || {
            // One session is fitted sequentially; sessions run side by side.
            fit_session(&model, &session.frames, &fit, Execution::Sequential)
                .map_err(|e| Failure {
                    stage: Stage::Fit,
                    message: e.to_string(),
                })
                .and_then(|frames| {
                    if frames.iter().all(|f| f.fit().is_none()) {
                        Err(Failure {
                            stage: Stage::Fit,
                            message: nns_core::Error::EmptySession.to_string(),
                        })
                    } else {
                        Ok(fits_document(&session.source_id, &model, &frames))
                    }
                })
        })
        .await
        .unwrap_or_else(|e| {
            Err(Failure {
                stage: Stage::Fit,
                message: format!("fitting task failed: {e}"),
            })
        });
        let _ = task_state.store.finish(&id, fitted);
    });

    let mut resp = json_response(StatusCode::ACCEPTED, &handle);
    if let Ok(loc) = format!("/sessions/{}", handle.session_id).parse() {
        resp.headers_mut().insert(header::LOCATION, loc);
    }
    Ok(resp)
}

fn lookup(state: &AppState, id: &str) -> Result<SessionRecord, ApiError> {
    state
        .store
        .get(id)
        .ok_or_else(|| ApiError::NotFound(format!("no session `{id}`")))
}

/// The cached fits of a fitted session.
fn fitted(rec: &SessionRecord) -> Result<Arc<Vec<nns_core::FrameOutcome>>, ApiError> {
    match (&rec.handle.status, &rec.fits) {
        (SessionStatus::Fitted, Some(f)) => Ok(f.clone()),
        (SessionStatus::Error, _) => {
            let f = rec.handle.error.clone().unwrap_or(Failure {
                stage: Stage::Fit,
                message: "unknown failure".into(),
            });
            Err(ApiError::SessionFailed {
                stage: f.stage,
                message: f.message,
            })
        }
        (status, _) => Err(ApiError::NotReady { status: status.name() }),
    }
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let rec = lookup(&state, &id)?;
    Ok(json_response(StatusCode::OK, &rec.handle))
}

#[derive(Serialize)]
struct SignalPayload<'a> {
    units: &'static str,
    session_id: &'a str,
    parameters: SignalEcho,
    raw: Vec<nns_core::MovementSignal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    filtered: Option<Vec<nns_core::MovementSignal>>,
    /// Raw segments too short to filter.
    #[serde(skip_serializing_if = "Option::is_none")]
    skipped_segments: Option<usize>,
}

#[derive(Serialize)]
struct SignalEcho {
    landmark: usize,
    mode: nns_core::DisplacementMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    filter: Option<nns_core::FilterSpec>,
}

async fn get_signal(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(raw_query): Query<Vec<(String, String)>>,
) -> Result<Response, ApiError> {
    let query = SignalQuery::parse(&raw_query)?;
    let rec = lookup(&state, &id)?;
    let fits = fitted(&rec)?;
    let config = PipelineConfig {
        landmark: query.landmark,
        mode: query.mode,
        ..PipelineConfig::default()
    };
    let raw = nns_core::pipeline::extract_signal(&fits, &config)
        .map_err(|e| ApiError::from_pipeline(e, &params::signal_field))?;
    let mut payload = SignalPayload {
        units: nns_core::quant::MODEL_UNITS,
        session_id: &id,
        parameters: SignalEcho {
            landmark: query.landmark,
            mode: query.mode,
            filter: query.filter,
        },
        raw,
        filtered: None,
        skipped_segments: None,
    };
    if let Some(spec) = query.filter {
        let mut filtered = Vec::new();
        let mut skipped = 0;
        for seg in &payload.raw {
            let kernel = nns_core::design_bandpass(&spec, seg.sample_rate).map_err(|e| {
                ApiError::from_pipeline(
                    nns_core::PipelineError { stage: Stage::Filter, source: e },
                    &params::signal_field,
                )
            })?;
            if seg.len() <= kernel.pad_length() && spec.zero_phase {
                skipped += 1;
                continue;
            }
            filtered.push(nns_core::apply_bandpass(seg, &kernel).map_err(|e| ApiError::Pipeline {
                stage: Stage::Filter,
                message: e.to_string(),
            })?);
        }
        payload.filtered = Some(filtered);
        payload.skipped_segments = Some(skipped);
    }
    Ok(json_response(StatusCode::OK, &payload))
}

async fn quantify_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: QuantifyRequest = if body.iter().all(u8::is_ascii_whitespace) {
        QuantifyRequest::default()
    } else {
        params::parse_body(&body)?
    };
    let rec = lookup(&state, &id)?;
    let config = PipelineConfig {
        fit: rec.handle.fit,
        landmark: req.landmark,
        mode: req.mode,
        filter: req.filter,
        quant: req.quant,
        gaps: req.gaps,
    };
    params::validate_quantify(&config)?;
    let fits = fitted(&rec)?;
    let (_, analysis) = analyze_fits(&fits, &config, rec.handle.sample_rate_hint)
        .map_err(|e| ApiError::from_pipeline(e, &params::quantify_field))?;
    Ok(json_text(StatusCode::OK, io::report_to_string(&analysis.report)))
}

#[derive(Serialize)]
struct AnnotationEntry {
    id: usize,
    region: Region,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Serialize)]
struct Annotation {
    count: usize,
    default_landmark: usize,
    landmarks: Vec<AnnotationEntry>,
}

async fn annotation() -> Response {
    let landmarks = (0..LANDMARK_COUNT)
        .map(|id| {
            let [x, y, z] = schematic_point(id);
            AnnotationEntry { id, region: region(id), x, y, z }
        })
        .collect();
    json_response(
        StatusCode::OK,
        &Annotation {
            count: LANDMARK_COUNT,
            default_landmark: JAW_TIP,
            landmarks,
        },
    )
}
