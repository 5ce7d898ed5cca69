use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use crate::corpus::{FetchMode, ImageFetcher};
use crate::error::Error;

use super::backend::{AnnotationService, SubmitRequest};

/// Header carrying the annotator id.
pub const TOKEN_HEADER: &str = "x-annotator-token";

/// Writes are serialized through the mutex, giving the store a single writer.
pub type SharedService = Arc<Mutex<AnnotationService>>;

struct ApiError(StatusCode, serde_json::Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            Error::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            Error::UnknownAnnotator(_) => (StatusCode::NOT_FOUND, "unknown_annotator"),
            Error::NotAssigned { .. } => (StatusCode::FORBIDDEN, "not_assigned"),
            Error::AlreadyAnnotated { .. } => (StatusCode::CONFLICT, "already_annotated"),
            Error::UnknownPair(_) | Error::MissingFixture(_) => (StatusCode::NOT_FOUND, "not_found"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let rules = match &e {
            Error::Validation(rules) => rules.clone(),
            _ => Vec::new(),
        };
        ApiError(status, json!({ "error": kind, "message": e.to_string(), "rules": rules }))
    }
}

fn annotator(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(TOKEN_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .ok_or_else(|| {
            ApiError(
                StatusCode::UNAUTHORIZED,
                json!({ "error": "missing_token", "message": format!("missing {TOKEN_HEADER} header"), "rules": [] }),
            )
        })
}

fn lock(state: &SharedService) -> std::sync::MutexGuard<'_, AnnotationService> {
    state.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

async fn next(State(state): State<SharedService>, headers: HeaderMap) -> Result<Response, ApiError> {
    let id = annotator(&headers)?;
    let item = lock(&state).next_item(&id)?;
    Ok(Json(item).into_response())
}

async fn submit(
    State(state): State<SharedService>,
    headers: HeaderMap,
    Json(req): Json<SubmitRequest>,
) -> Result<Response, ApiError> {
    let id = annotator(&headers)?;
    let ack = lock(&state).submit(&id, &req)?;
    Ok(Json(ack).into_response())
}

async fn progress(State(state): State<SharedService>) -> Response {
    Json(lock(&state).progress()).into_response()
}

async fn agreement(State(state): State<SharedService>) -> Result<Response, ApiError> {
    let report = lock(&state).agreement()?;
    Ok(Json(report).into_response())
}

async fn schema(State(state): State<SharedService>) -> Response {
    Json(lock(&state).schema().clone()).into_response()
}

async fn image(State(state): State<SharedService>, Path(pair_id): Path<String>) -> Result<Response, ApiError> {
    let (dir, image_ref) = {
        let svc = lock(&state);
        let pair = svc.pair(&pair_id).ok_or_else(|| Error::UnknownPair(pair_id.clone()))?;
        let dir = svc.image_cache().cloned().ok_or_else(|| Error::MissingFixture(pair.image_ref.clone()))?;
        (dir, pair.image_ref.clone())
    };
    let bytes = ImageFetcher::new(&dir, FetchMode::Fixture)
        .fetch(&image_ref)
        .or_else(|_| ImageFetcher::new(&dir, FetchMode::Network).fetch(&image_ref))
        .map_err(|_| Error::MissingFixture(image_ref))?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

/// Routes: `GET /next`, `POST /submit`, `GET /progress`, `GET /agreement`,
/// `GET /schema` and `GET /image/:pair_id`.
pub fn router(state: SharedService) -> Router {
    Router::new()
        .route("/next", get(next))
        .route("/submit", post(submit))
        .route("/progress", get(progress))
        .route("/agreement", get(agreement))
        .route("/schema", get(schema))
        .route("/image/:pair_id", get(image))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: SharedService) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
