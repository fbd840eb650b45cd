//! HTTP annotation service.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::engine::Engine;

#[derive(Deserialize)]
struct AnnotateRequest {
    text: String,
}

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

async fn annotate(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    let request: AnnotateRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid request body: {e}")),
    };
    // annotation is CPU-bound; keep it off the async workers
    let result = tokio::task::spawn_blocking(move || engine.linker.annotate_json(&request.text)).await;
    match result {
        Ok(Ok(body)) => ([(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn health(State(engine): State<Arc<Engine>>) -> Response {
    Json(engine.health()).into_response()
}

pub fn router(engine: Arc<Engine>) -> Router {
    let limit = engine.config.body_limit;
    Router::new()
        .route("/api/annotate", post(annotate))
        .route("/health", get(health))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(engine)
}

/// Serves until interrupted.
pub async fn serve(engine: Arc<Engine>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
