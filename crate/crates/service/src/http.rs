//! Axum routes over [`Service`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use declutter_core::Category;
use serde::Deserialize;

use crate::config::ServiceConfig;
use crate::error::{Error, Result};
use crate::service::Service;

const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    service: Arc<Service>,
    locks: Arc<Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>>,
}

impl AppState {
    pub fn new(service: Service) -> Self {
        Self { service: Arc::new(service), locks: Arc::default() }
    }

    pub fn service(&self) -> &Service {
        &self.service
    }

    fn lock_for(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.locks.lock().expect("session lock table poisoned");
        locks.entry(id.to_owned()).or_default().clone()
    }

    /// Runs `f` on a blocking worker while holding the session's lock.
    async fn with_session<T, F>(&self, id: String, f: F) -> Result<T>
    where
        T: Send + 'static,
        F: FnOnce(&Service, &str) -> Result<T> + Send + 'static,
    {
        let lock = self.lock_for(&id);
        let _guard = lock.lock().await;
        let service = self.service.clone();
        tokio::task::spawn_blocking(move || f(&service, &id))
            .await
            .map_err(|e| Error::Internal(format!("worker failed: {e}")))?
    }
}

#[derive(Debug, Deserialize)]
struct OverrideRequest {
    index: usize,
    category: Category,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/overrides", post(post_override))
        .route("/v1/sessions/{id}/clean", post(post_clean))
        .route("/v1/sessions/{id}/elements/{index}/suggestions", get(get_suggestions))
        .route("/v1/sessions/{id}/preview.png", get(get_preview))
        .route("/v1/sessions/{id}/confidence.png", get(get_confidence))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

async fn healthz() -> impl IntoResponse {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create_session(State(state): State<AppState>, mut multipart: Multipart) -> Result<impl IntoResponse> {
    let mut upload = None;
    while let Some(field) = multipart.next_field().await.map_err(|e| Error::BadRequest(e.to_string()))? {
        if field.name() == Some("image") || field.file_name().is_some() {
            upload = Some(field.bytes().await.map_err(|e| Error::BadRequest(e.to_string()))?);
            break;
        }
    }
    let upload = upload.ok_or_else(|| Error::BadRequest("multipart body has no `image` field".into()))?;
    let service = state.service.clone();
    let view = tokio::task::spawn_blocking(move || service.create_session(&upload))
        .await
        .map_err(|e| Error::Internal(format!("worker failed: {e}")))??;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse> {
    Ok(Json(state.with_session(id, |s, id| s.session(id)).await?))
}

async fn post_override(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<OverrideRequest>,
) -> Result<impl IntoResponse> {
    let view = state.with_session(id, move |s, id| s.set_override(id, body.index, body.category)).await?;
    Ok(Json(view))
}

async fn post_clean(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse> {
    Ok(Json(state.with_session(id, |s, id| s.clean(id)).await?))
}

async fn get_suggestions(
    State(state): State<AppState>,
    Path((id, index)): Path<(String, usize)>,
) -> Result<impl IntoResponse> {
    Ok(Json(state.with_session(id, move |s, id| s.suggestions(id, index)).await?))
}

fn png(bytes: Vec<u8>) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "no-store")], bytes)
}

async fn get_preview(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse> {
    Ok(png(state.with_session(id, |s, id| s.preview_png(id)).await?))
}

async fn get_confidence(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse> {
    Ok(png(state.with_session(id, |s, id| s.confidence_png(id)).await?))
}

/// Binds `config.listen` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let service = tokio::task::spawn_blocking({
        let config = config.clone();
        move || Service::from_config(&config)
    })
    .await
    .map_err(|e| Error::Internal(e.to_string()))??;
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(service)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
