//! HTTP routes and the per-session WebSocket event stream.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;

use crate::config::{ConfigError, SessionConfig};
use crate::event::Event;
use crate::session::SessionError;
use crate::store::SessionStore;

type AppState = Arc<SessionStore>;

pub struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self.0 {
            SessionError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            SessionError::Config(ConfigError::AssetNotFound(_)) => (StatusCode::BAD_REQUEST, "asset_not_found"),
            SessionError::Config(ConfigError::InvalidConfig(_)) => (StatusCode::BAD_REQUEST, "invalid_config"),
            SessionError::EmptyChat => (StatusCode::BAD_REQUEST, "empty_chat"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let body = json!({ "error": code, "message": self.0.to_string() });
        (status, Json(body)).into_response()
    }
}

/// Runs store work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, SessionError> + Send + 'static,
) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError),
        Err(e) => Err(ApiError(SessionError::Io(std::io::Error::other(e.to_string())))),
    }
}

pub fn router(store: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}/chat", post(chat))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/transcript", get(transcript))
        .route("/sessions/{id}/events", get(events))
        .with_state(store)
}

/// Serves the router on `listener` and starts the step timers of any
/// recovered sessions that advance on their own.
pub async fn serve(listener: TcpListener, store: AppState) -> std::io::Result<()> {
    for id in store.ids() {
        if let Ok(cfg) = store.config(&id) {
            if let Some(ms) = cfg.step_ms {
                spawn_autoplay(store.clone(), id, ms);
            }
        }
    }
    axum::serve(listener, router(store)).await
}

fn spawn_autoplay(store: AppState, id: String, ms: u64) {
    tokio::spawn(async move {
        let mut timer = tokio::time::interval(Duration::from_millis(ms));
        timer.tick().await;
        loop {
            timer.tick().await;
            let (s, i) = (store.clone(), id.clone());
            let done = tokio::task::spawn_blocking(move || {
                s.advance(&i, 1)?;
                Ok::<_, SessionError>(s.snapshot(&i)?.finished)
            })
            .await;
            match done {
                Ok(Ok(false)) => {}
                _ => break,
            }
        }
    });
}

async fn create(State(store): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let cfg = if body.iter().all(u8::is_ascii_whitespace) {
        SessionConfig::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError(SessionError::Config(ConfigError::InvalidConfig(e.to_string()))))?
    };
    let step_ms = cfg.step_ms;
    let s = store.clone();
    let snap = blocking(move || s.create(cfg)).await?;
    if let Some(ms) = step_ms {
        spawn_autoplay(store, snap.session_id.clone(), ms);
    }
    let body = json!({ "session_id": snap.session_id, "snapshot": snap });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn list(State(store): State<AppState>) -> Json<Vec<String>> {
    Json(store.ids())
}

#[derive(Deserialize)]
struct ChatBody {
    text: String,
}

async fn chat(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<ChatBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let events = blocking(move || store.post_chat(&id, &body.text)).await?;
    Ok(Json(json!({ "accepted": true, "events": events })))
}

#[derive(Deserialize)]
struct AdvanceBody {
    #[serde(default = "one")]
    steps: u64,
}

fn one() -> u64 {
    1
}

async fn advance(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<AdvanceBody>>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let steps = body.map(|Json(b)| b.steps).unwrap_or(1);
    let events = blocking(move || store.advance(&id, steps)).await?;
    Ok(Json(json!({ "events": events })))
}

async fn state(State(store): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let snap = store.snapshot(&id)?;
    Ok(Json(snap).into_response())
}

async fn transcript(State(store): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let body = blocking(move || store.transcript_jsonl(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    from: u64,
}

/// Streams events with `seq > from`, then every later event as it is
/// published.
async fn events(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    store.snapshot(&id)?;
    Ok(ws.on_upgrade(move |socket| stream(socket, store, id, q.from)))
}

async fn send(socket: &mut WebSocket, e: &Event) -> bool {
    let text = serde_json::to_string(e).expect("event serializes");
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn stream(mut socket: WebSocket, store: AppState, id: String, from: u64) {
    let Ok((backlog, mut rx)) = store.subscribe(&id, from) else {
        return;
    };
    let mut last = from;
    for e in &backlog {
        if !send(&mut socket, e).await {
            return;
        }
        last = e.seq;
    }
    loop {
        tokio::select! {
            r = rx.recv() => match r {
                Ok(e) => {
                    if e.seq <= last {
                        continue;
                    }
                    if !send(&mut socket, &e).await {
                        return;
                    }
                    last = e.seq;
                }
                Err(RecvError::Lagged(_)) => {
                    let Ok(missed) = store.events_after(&id, last) else { return };
                    for e in &missed {
                        if !send(&mut socket, e).await {
                            return;
                        }
                        last = e.seq;
                    }
                }
                Err(RecvError::Closed) => return,
            },
            m = socket.recv() => match m {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                _ => {}
            },
        }
    }
}
