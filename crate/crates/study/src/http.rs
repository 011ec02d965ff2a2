//! HTTP front end for the browser annotation client.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/api/study/{id}/session?participant=` | `Session` |
//! | GET | `/api/study/{id}/progress` | `Progress` |
//! | GET | `/api/image/{id}` | image bytes |
//! | POST | `/api/session/{sid}/response` | `Submission` in, `Ack` out |
//! | POST | `/api/session/{sid}/abandon` | `Session` |
//!
//! Failures are `{"error": "<Kind>", "message": "..."}` with a 4xx/5xx status.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::StudyError;
use crate::service::StudyService;
use crate::study::Submission;

/// Studies served by one process plus the image files they show.
#[derive(Default)]
pub struct StudyServer {
    studies: HashMap<String, Arc<StudyService>>,
    images: HashMap<String, PathBuf>,
}

impl StudyServer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_study(&mut self, service: StudyService) {
        self.studies.insert(service.study_id(), Arc::new(service));
    }

    pub fn add_image(&mut self, id: impl Into<String>, path: impl Into<PathBuf>) {
        self.images.insert(id.into(), path.into());
    }

    pub fn study(&self, id: &str) -> Option<&Arc<StudyService>> {
        self.studies.get(id)
    }

    /// Session ids carry their study id as a prefix; fall back to asking
    /// every study so foreign ids still resolve.
    fn study_for_session(&self, sid: &str) -> Result<&Arc<StudyService>, ApiError> {
        if let Some((prefix, _)) = sid.rsplit_once("-s") {
            if let Some(s) = self.studies.get(prefix) {
                return Ok(s);
            }
        }
        self.studies
            .values()
            .find(|s| s.session(sid).is_some())
            .ok_or_else(|| StudyError::UnknownSession(sid.to_string()).into())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: kind.to_string(),
                message: message.into(),
            },
        }
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let status = match &e {
            StudyError::UnknownStudy(_) | StudyError::UnknownImage(_) | StudyError::UnknownSession(_) => {
                StatusCode::NOT_FOUND
            }
            StudyError::StudyExhausted => StatusCode::GONE,
            StudyError::ParticipantBusy { .. }
            | StudyError::DuplicateResponse { .. }
            | StudyError::SessionClosed(_) => StatusCode::CONFLICT,
            StudyError::ImageNotInSession { .. }
            | StudyError::SchemaViolation(_)
            | StudyError::TaskOrderViolation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{e}");
        }
        Self::new(status, e.kind(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type Shared = Arc<StudyServer>;

pub fn router(server: Shared) -> Router {
    Router::new()
        .route("/api/study/{id}/session", get(get_session))
        .route("/api/study/{id}/progress", get(get_progress))
        .route("/api/image/{id}", get(get_image))
        .route("/api/session/{sid}/response", post(post_response))
        .route("/api/session/{sid}/abandon", post(post_abandon))
        .with_state(server)
}

fn study<'a>(server: &'a StudyServer, id: &str) -> Result<&'a Arc<StudyService>, ApiError> {
    server
        .study(id)
        .ok_or_else(|| StudyError::UnknownStudy(id.to_string()).into())
}

/// Runs a blocking service call (they fsync) off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, StudyError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
        .map_err(ApiError::from)
}

async fn get_session(
    State(server): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<impl IntoResponse, ApiError> {
    let participant = q.get("participant").filter(|p| !p.is_empty()).cloned().ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "BadRequest",
            "missing `participant` query parameter",
        )
    })?;
    let svc = study(&server, &id)?.clone();
    let session = blocking(move || svc.next_session(&participant)).await?;
    Ok(Json(session))
}

async fn get_progress(State(server): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(study(&server, &id)?.progress()))
}

async fn get_image(State(server): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let path = server
        .images
        .get(&id)
        .ok_or_else(|| ApiError::from(StudyError::UnknownImage(id.clone())))?;
    let bytes = tokio::fs::read(path).await.map_err(|e| {
        log::error!("{}: {e}", path.display());
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "IoError",
            format!("cannot read image `{id}`"),
        )
    })?;
    let mime = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("tif" | "tiff") => "image/tiff",
        Some("bmp") => "image/bmp",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn post_response(
    State(server): State<Shared>,
    Path(sid): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let submission: Submission = serde_json::from_slice(&body)
        .map_err(|e| ApiError::from(StudyError::SchemaViolation(format!("malformed response body: {e}"))))?;
    let svc = server.study_for_session(&sid)?.clone();
    let ack = blocking(move || svc.record_response(&sid, &submission)).await?;
    Ok((StatusCode::CREATED, Json(ack)))
}

async fn post_abandon(State(server): State<Shared>, Path(sid): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let svc = server.study_for_session(&sid)?.clone();
    Ok(Json(blocking(move || svc.abandon_session(&sid)).await?))
}

/// Serves until the listener fails or the process exits.
pub async fn serve(listener: tokio::net::TcpListener, server: Shared) -> std::io::Result<()> {
    axum::serve(listener, router(server)).await
}
