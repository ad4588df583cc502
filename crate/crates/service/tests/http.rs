use std::sync::Arc;
use std::time::Duration;

use futures::StreamExt;
use serde_json::{json, Value};
use sous_core::recipe::RecipeBook;
use sous_core::runtime::{KitchenWorld, WorldConfig};
use sous_service::{router, Event, EventBody, Fold, SessionSnapshot, SessionStore};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

async fn start() -> String {
    let store = Arc::new(SessionStore::in_memory());
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(store)).await.unwrap() });
    format!("127.0.0.1:{}", addr.port())
}

async fn create(client: &reqwest::Client, base: &str, body: Value) -> (reqwest::StatusCode, Value) {
    let r = client.post(format!("http://{base}/sessions")).json(&body).send().await.unwrap();
    (r.status(), r.json().await.unwrap())
}

async fn chat(client: &reqwest::Client, base: &str, id: &str, text: &str) -> (reqwest::StatusCode, Value) {
    let r = client
        .post(format!("http://{base}/sessions/{id}/chat"))
        .json(&json!({ "text": text }))
        .send()
        .await
        .unwrap();
    (r.status(), r.json().await.unwrap())
}

async fn advance(client: &reqwest::Client, base: &str, id: &str, steps: u64) -> Value {
    let r = client
        .post(format!("http://{base}/sessions/{id}/advance"))
        .json(&json!({ "steps": steps }))
        .send()
        .await
        .unwrap();
    assert!(r.status().is_success());
    r.json().await.unwrap()
}

async fn state(client: &reqwest::Client, base: &str, id: &str) -> SessionSnapshot {
    let r = client.get(format!("http://{base}/sessions/{id}/state")).send().await.unwrap();
    assert!(r.status().is_success());
    r.json().await.unwrap()
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn connect(base: &str, id: &str, from: u64) -> Ws {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{base}/sessions/{id}/events?from={from}"))
        .await
        .unwrap();
    ws
}

async fn next_event(ws: &mut Ws) -> Event {
    loop {
        let m = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("event in time")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = m {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

#[tokio::test]
async fn create_chat_and_state() {
    let base = start().await;
    let c = reqwest::Client::new();
    let (status, body) = create(&c, &base, json!({ "planner": "tree", "seed": 3 })).await;
    assert_eq!(status, 201);
    let id = body["session_id"].as_str().unwrap().to_string();
    assert_eq!(body["snapshot"]["planner"], "tree");

    let (status, body) = chat(&c, &base, &id, "Let's make tossed salad!").await;
    assert_eq!(status, 200);
    assert_eq!(body["accepted"], true);
    let kinds: Vec<&str> = body["events"].as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"set_recipe") && kinds.contains(&"say"), "{kinds:?}");
    for e in body["events"].as_array().unwrap() {
        assert!(e.get("seq").is_some() && e.get("payload").is_some());
    }
    assert_eq!(state(&c, &base, &id).await.recipe_name, "Tossed Salad");

    let r = c.get(format!("http://{base}/sessions/{id}/transcript")).send().await.unwrap();
    assert_eq!(r.headers()["content-type"], "application/x-ndjson");
    let text = r.text().await.unwrap();
    let t = sous_core::eval::Transcript::from_jsonl(&text).unwrap();
    assert!(!t.records.is_empty());
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let base = start().await;
    let c = reqwest::Client::new();
    let (status, body) = create(&c, &base, json!({ "world": "/missing/world.toml" })).await;
    assert_eq!(status, 400);
    assert_eq!(body["error"], "asset_not_found");
    let (status, body) = create(&c, &base, json!({ "planner": "forest" })).await;
    assert_eq!(status, 400);
    assert_eq!(body["error"], "invalid_config");
    let (status, body) = create(&c, &base, json!({ "step_ms": 0 })).await;
    assert_eq!(status, 400);
    assert_eq!(body["error"], "invalid_config");

    let (status, body) = chat(&c, &base, "s9999", "hi").await;
    assert_eq!(status, 404);
    assert_eq!(body["error"], "unknown_session");
    let r = c.get(format!("http://{base}/sessions/s9999/state")).send().await.unwrap();
    assert_eq!(r.status(), 404);
    assert!(tokio_tungstenite::connect_async(format!("ws://{base}/sessions/s9999/events")).await.is_err());

    let (_, body) = create(&c, &base, json!({})).await;
    let id = body["session_id"].as_str().unwrap();
    let (status, body) = chat(&c, &base, id, "  ").await;
    assert_eq!(status, 400);
    assert_eq!(body["error"], "empty_chat");
    assert_eq!(state(&c, &base, id).await.tick_counter, 0);
}

#[tokio::test]
async fn websocket_delivers_each_event_once_and_resumes() {
    let base = start().await;
    let c = reqwest::Client::new();
    let (_, body) = create(&c, &base, json!({})).await;
    let id = body["session_id"].as_str().unwrap().to_string();
    let mut live = connect(&base, &id, 0).await;
    assert_eq!(next_event(&mut live).await.seq, 1);

    chat(&c, &base, &id, "Let's make Caesar Salad!").await;
    chat(&c, &base, &id, "Yes, please go ahead.").await;
    advance(&c, &base, &id, 12).await;
    let last = state(&c, &base, &id).await.seq;

    let mut seen = vec![1];
    while *seen.last().unwrap() < last {
        seen.push(next_event(&mut live).await.seq);
    }
    assert_eq!(seen, (1..=last).collect::<Vec<_>>());

    let k = last / 2;
    let mut resumed = connect(&base, &id, k).await;
    for want in k + 1..=last {
        assert_eq!(next_event(&mut resumed).await.seq, want);
    }
    advance(&c, &base, &id, 1).await;
    assert_eq!(next_event(&mut resumed).await.seq, last + 1);
    assert_eq!(next_event(&mut live).await.seq, last + 1);
}

/// A client-side view model built only from the event stream agrees with
/// the server's snapshot whenever the session is quiescent.
#[tokio::test]
async fn console_view_model_matches_state() {
    let base = start().await;
    let c = reqwest::Client::new();
    let (_, body) = create(&c, &base, json!({ "seed": 11 })).await;
    let id = body["session_id"].as_str().unwrap().to_string();
    let mut ws = connect(&base, &id, 0).await;
    let mut view = Fold::new(RecipeBook::builtin(), KitchenWorld::new(&WorldConfig::default()));

    let script: Vec<(&str, u64)> = vec![
        ("Let's make Caesar Salad!", 0),
        ("Yes, please go ahead.", 6),
        ("I finished Prepare lettuce.", 8),
        ("Yes, please go ahead.", 10),
        ("R2, stop!", 3),
        ("Yes, please go ahead.", 20),
    ];
    let mut received = 0u64;
    let mut checks = 0;
    for (text, steps) in script {
        chat(&c, &base, &id, text).await;
        if steps > 0 {
            advance(&c, &base, &id, steps).await;
        }
        let snap = state(&c, &base, &id).await;
        while received < snap.seq {
            let e = next_event(&mut ws).await;
            assert_eq!(e.seq, received + 1);
            view.apply(e.seq, &EventBody::from_event(&e).unwrap());
            received = e.seq;
        }
        assert_eq!(view.snapshot(), snap);
        checks += 1;
    }
    let mut extra = 0;
    while received < 50 {
        advance(&c, &base, &id, 5).await;
        let snap = state(&c, &base, &id).await;
        while received < snap.seq {
            let e = next_event(&mut ws).await;
            view.apply(e.seq, &EventBody::from_event(&e).unwrap());
            received = e.seq;
        }
        assert_eq!(view.snapshot(), snap);
        extra += 1;
        assert!(extra < 50);
    }
    assert!(received >= 50 && checks == 6);
}

#[tokio::test]
async fn autoplay_sessions_advance_on_their_own() {
    let store = Arc::new(SessionStore::in_memory());
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("127.0.0.1:{}", listener.local_addr().unwrap().port());
    tokio::spawn(sous_service::serve(listener, store));
    let c = reqwest::Client::new();
    let (_, body) = create(&c, &base, json!({ "step_ms": 5 })).await;
    let id = body["session_id"].as_str().unwrap().to_string();
    for _ in 0..200 {
        if state(&c, &base, &id).await.clock >= 3 {
            return;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("clock did not advance");
}
