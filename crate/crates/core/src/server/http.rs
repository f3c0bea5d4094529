use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde_json::json;

use super::connection::{Outgoing, CLOSE_NORMAL};
use super::hub::Hub;
use super::metrics;
use crate::content::{AssetStore, ContentError, MAX_ASSET_BYTES};

pub const ADMIN_TOKEN_HEADER: &str = "x-admin-token";
const MAX_CONTROL_FRAME: usize = 256 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub hub: Arc<Hub>,
    pub store: Option<Arc<AssetStore>>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/metrics", get(metrics_text))
        .route("/ws", get(ws_upgrade))
        .route("/presets", get(presets))
        .route("/assets", axum::routing::post(upload_asset))
        .route("/assets/{file}", get(fetch_asset))
        .route("/rooms/{id}/state", get(room_state))
        .route("/rooms/{id}/log", get(room_log))
        .layer(DefaultBodyLimit::max(MAX_ASSET_BYTES + 1024))
        .with_state(state)
}

async fn healthz(State(state): State<AppState>) -> String {
    format!("ok rooms={}\n", state.hub.room_count())
}

async fn metrics_text(State(state): State<AppState>) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "text/plain; version=0.0.4")], metrics::render(&state.hub))
}

async fn presets(State(state): State<AppState>) -> Json<serde_json::Value> {
    let list: Vec<_> = state
        .hub
        .presets()
        .iter()
        .map(|p| {
            json!({
                "preset_id": p.preset_id,
                "title": p.title,
                "objects": p.objects.iter().map(|o| json!({
                    "label": o.label, "asset_url": o.asset_url, "transform": o.transform,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    Json(json!(list))
}

async fn fetch_asset(State(state): State<AppState>, Path(file): Path<String>) -> Response {
    let Some(store) = &state.store else {
        return StatusCode::NOT_FOUND.into_response();
    };
    match store.fetch(&file) {
        Some(bytes) => {
            state.hub.counters.asset_bytes_served.fetch_add(bytes.len() as u64, Ordering::Relaxed);
            (
                [
                    (header::CONTENT_TYPE, "model/gltf-binary"),
                    (header::CACHE_CONTROL, "public, max-age=31536000, immutable"),
                ],
                bytes,
            )
                .into_response()
        }
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

fn admin_room(state: &AppState, headers: &HeaderMap) -> Option<String> {
    let token = headers.get(ADMIN_TOKEN_HEADER)?.to_str().ok()?;
    state.hub.room_for_admin_token(token)
}

async fn upload_asset(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    if admin_room(&state, &headers).is_none() {
        return (StatusCode::UNAUTHORIZED, "admin token required\n").into_response();
    }
    let Some(store) = state.store.clone() else {
        return (StatusCode::SERVICE_UNAVAILABLE, "no asset store configured\n").into_response();
    };
    let stored = tokio::task::spawn_blocking(move || store.store(&body)).await;
    match stored {
        Ok(Ok(url)) => {
            state.hub.counters.asset_uploads.fetch_add(1, Ordering::Relaxed);
            (StatusCode::CREATED, Json(json!({ "url": url }))).into_response()
        }
        Ok(Err(e)) => {
            let status = match e {
                ContentError::OversizeAsset(_) => StatusCode::PAYLOAD_TOO_LARGE,
                ContentError::StorageFull => StatusCode::INSUFFICIENT_STORAGE,
                ContentError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            };
            (status, format!("{e}\n")).into_response()
        }
        Err(_) => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    }
}

async fn room_state(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    if admin_room(&state, &headers).as_deref() != Some(id.as_str()) {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    match state.hub.room_state(&id) {
        Some(room) => Json(room).into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn room_log(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    if admin_room(&state, &headers).as_deref() != Some(id.as_str()) {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    match state.hub.room_log(&id) {
        Some(log) => Json(log).into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn ws_upgrade(State(state): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.max_message_size(MAX_CONTROL_FRAME).on_upgrade(move |socket| pump(state.hub, socket))
}

/// Reader loop on this task, writer loop on a spawned one.
async fn pump(hub: Arc<Hub>, socket: WebSocket) {
    let conn = hub.connect();
    let (mut sink, mut stream) = socket.split();
    let writer_conn = conn.clone();
    let writer = tokio::spawn(async move {
        loop {
            let batch = writer_conn.drain();
            if batch.is_empty() {
                writer_conn.ready().await;
                continue;
            }
            for out in batch {
                let message = match out {
                    Outgoing::Text(text) => Message::Text(text.into()),
                    Outgoing::Binary(bytes) => Message::Binary(bytes.into()),
                    Outgoing::Close { code, reason } => {
                        let _ = sink.send(Message::Close(Some(CloseFrame { code, reason: reason.into() }))).await;
                        let _ = sink.close().await;
                        return;
                    }
                };
                if sink.send(message).await.is_err() {
                    return;
                }
            }
        }
    });

    while let Some(Ok(message)) = stream.next().await {
        match message {
            Message::Text(text) => hub.ingest_text(&conn, text.as_bytes()),
            Message::Binary(bytes) => hub.ingest_binary(&conn, &bytes),
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => {}
        }
        if conn.is_closed() {
            break;
        }
    }
    hub.disconnect(&conn);
    conn.close(CLOSE_NORMAL, "bye");
    let _ = tokio::time::timeout(Duration::from_secs(5), writer).await;
}
