//! HTTP API over [`MonitorService`], plus the drive console endpoints.
//!
//! | route | |
//! |---|---|
//! | `POST /ingest` | raw frame bytes → 202 |
//! | `GET /patients/{id}/latest` | newest vitals and status colour |
//! | `GET /patients/{id}/range?from&to&kind` | closed-interval history |
//! | `GET /alerts?active` | alert log |
//! | `POST /alerts/{id}/ack` | acknowledge |
//! | `GET /stream` | server-sent events, one JSON object per event |
//! | `POST /drive`, `POST /mode`, `POST /safehalt/clear` | forwarded to the drive session |

use std::collections::HashMap;
use std::convert::Infallible;
use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::sync::broadcast::error::RecvError;

use super::{ControlEvent, MonitorService, ServiceError, StreamEvent};
use crate::arbitration::{Hazards, ModeButton, MotionDirection};
use crate::calibration::VitalKind;

/// A drive input from the operator console.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "modality", rename_all = "lowercase")]
pub enum DriveRequest {
    /// Centered joystick counts (±2047 full scale).
    Joystick {
        x: i32,
        y: i32,
        #[serde(default)]
        pressed: bool,
    },
    Voice { text: String },
    /// A preset head tilt in the given direction.
    Gesture { direction: MotionDirection },
    Eog { direction: MotionDirection, angle_deg: f64 },
    /// Let go of every input.
    Release,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsoleError {
    #[error("safe halt active")]
    SafeHaltActive,
    #[error("hazard still active: {0:?}")]
    HazardStillActive(Hazards),
    #[error("invalid request: {0}")]
    Invalid(String),
}

/// A live chair the console can steer.
pub trait DriveConsole: Send + Sync {
    fn drive(&self, req: DriveRequest) -> Result<ControlEvent, ConsoleError>;
    fn select_mode(&self, button: ModeButton) -> Result<ControlEvent, ConsoleError>;
    fn clear_safe_halt(&self) -> Result<ControlEvent, ConsoleError>;
}

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<MonitorService>,
    pub console: Option<Arc<dyn DriveConsole>>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let code = match e {
            ServiceError::UnknownPatient(_) | ServiceError::UnknownAlert(_) => StatusCode::NOT_FOUND,
            ServiceError::AlreadyAcknowledged(_) => StatusCode::CONFLICT,
            ServiceError::Rejected(_) | ServiceError::InvalidRange { .. } => StatusCode::BAD_REQUEST,
            ServiceError::Io(_) | ServiceError::CorruptLog { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl From<ConsoleError> for ApiError {
    fn from(e: ConsoleError) -> Self {
        let code = match e {
            ConsoleError::SafeHaltActive | ConsoleError::HazardStillActive(_) => StatusCode::CONFLICT,
            ConsoleError::Invalid(_) => StatusCode::BAD_REQUEST,
        };
        ApiError(code, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/ingest", post(ingest))
        .route("/patients", get(patients))
        .route("/patients/{id}/latest", get(latest))
        .route("/patients/{id}/range", get(range))
        .route("/alerts", get(alerts))
        .route("/alerts/{id}/ack", post(ack))
        .route("/stream", get(stream))
        .route("/drive", post(drive))
        .route("/mode", post(mode))
        .route("/safehalt/clear", post(clear_safehalt))
        .with_state(state)
}

/// Serve until `shutdown` resolves.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

async fn ingest(State(s): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let out = s.service.ingest(&body)?;
    let ids: Vec<u64> = out.alerts.iter().map(|a| a.event.id).collect();
    Ok((StatusCode::ACCEPTED, Json(json!({ "patient_id": out.patient_id, "seq": out.seq, "alerts": ids }))))
}

async fn patients(State(s): State<AppState>) -> Json<Vec<String>> {
    Json(s.service.patients())
}

async fn latest(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.service.latest(&id)?))
}

#[derive(Deserialize)]
struct RangeQuery {
    from: Option<u64>,
    to: Option<u64>,
    kind: Option<String>,
}

async fn range(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<RangeQuery>) -> ApiResult<Json<serde_json::Value>> {
    let (from, to) = (q.from.unwrap_or(0), q.to.unwrap_or(u64::MAX));
    let value = match q.kind {
        Some(k) => {
            let kind: VitalKind = k.parse().map_err(|e| ApiError(StatusCode::BAD_REQUEST, e))?;
            serde_json::to_value(s.service.range_kind(&id, from, to, kind)?)
        }
        None => serde_json::to_value(s.service.range(&id, from, to)?),
    };
    Ok(Json(value.expect("records serialize")))
}

async fn alerts(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> impl IntoResponse {
    let active = q.get("active").is_some_and(|v| !matches!(v.as_str(), "false" | "0"));
    Json(s.service.alerts(active))
}

async fn ack(State(s): State<AppState>, Path(id): Path<u64>) -> ApiResult<impl IntoResponse> {
    let status = s.service.acknowledge(id)?;
    Ok(Json(json!({ "id": id, "status": status })))
}

fn event_name(ev: &StreamEvent) -> &'static str {
    match ev {
        StreamEvent::Record { .. } => "record",
        StreamEvent::Alert { .. } => "alert",
        StreamEvent::Ack { .. } => "ack",
        StreamEvent::Control(_) => "control",
    }
}

/// Each subscriber gets its own receiver; one that falls behind the
/// broadcast buffer is disconnected instead of slowing ingest.
async fn stream(State(s): State<AppState>) -> Sse<impl futures::Stream<Item = Result<Event, Infallible>>> {
    let rx = s.service.subscribe();
    let events = futures::stream::unfold(rx, |mut rx| async move {
        match rx.recv().await {
            Ok(ev) => {
                let data = serde_json::to_string(&ev).expect("event serializes");
                Some((Ok(Event::default().event(event_name(&ev)).data(data)), rx))
            }
            Err(RecvError::Lagged(_)) | Err(RecvError::Closed) => None,
        }
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}

fn console(s: &AppState) -> ApiResult<&Arc<dyn DriveConsole>> {
    s.console.as_ref().ok_or_else(|| ApiError(StatusCode::SERVICE_UNAVAILABLE, "no drive session attached".into()))
}

async fn drive(State(s): State<AppState>, Json(req): Json<DriveRequest>) -> ApiResult<impl IntoResponse> {
    Ok(Json(console(&s)?.drive(req)?))
}

#[derive(Deserialize)]
struct ModeBody {
    mode: String,
}

async fn mode(State(s): State<AppState>, Json(body): Json<ModeBody>) -> ApiResult<impl IntoResponse> {
    let button: ModeButton = body.mode.parse().map_err(|e: String| ApiError(StatusCode::BAD_REQUEST, e))?;
    Ok(Json(console(&s)?.select_mode(button)?))
}

async fn clear_safehalt(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    Ok(Json(console(&s)?.clear_safe_halt()?))
}
