mod common;

use std::time::Duration;

use futures::{SinkExt, StreamExt};
use relic_core::CameraPose;
use relic_server::{ErrorCode, ServerBody, ServerMessage, SessionState};
use serde_json::json;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn connect(url: &str) -> Ws {
    connect_async(url).await.unwrap().0
}

async fn send(ws: &mut Ws, value: serde_json::Value) {
    ws.send(Message::Text(value.to_string().into())).await.unwrap();
}

async fn join(ws: &mut Ws, role: &str, key: &str) {
    send(ws, json!({"v": 1, "type": "join", "role": role, "key": key})).await;
}

fn state(seq: u64) -> serde_json::Value {
    let s = SessionState {
        camera: CameraPose::default(),
        lights: vec![],
        material: Default::default(),
        active_shader: None,
        active_annotation: None,
        seq,
    };
    json!({"v": 1, "type": "state", "state": s})
}

async fn recv(ws: &mut Ws) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("message within timeout")
            .expect("socket open")
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

fn seq_of(m: &ServerMessage) -> Option<u64> {
    match &m.body {
        ServerBody::State { state } => Some(state.seq),
        ServerBody::Snapshot { state, .. } => state.as_ref().map(|s| s.seq),
        _ => None,
    }
}

fn error_code(m: &ServerMessage) -> ErrorCode {
    match &m.body {
        ServerBody::Error { code, .. } => *code,
        other => panic!("expected error, got {other:?}"),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn ordering_snapshot_and_stale_seq() {
    let server = common::start_memory().await;
    let url = server.ws_url("lecture");

    let mut follower = connect(&url).await;
    join(&mut follower, "follower", "k").await;
    assert_eq!(error_code(&recv(&mut follower).await), ErrorCode::NotFound);

    let mut presenter = connect(&url).await;
    join(&mut presenter, "presenter", "k").await;
    assert!(matches!(recv(&mut presenter).await.body, ServerBody::Snapshot { state: None, .. }));

    join(&mut follower, "follower", "k").await;
    assert!(matches!(recv(&mut follower).await.body, ServerBody::Snapshot { state: None, .. }));
    for s in 1..=3 {
        send(&mut presenter, state(s)).await;
    }
    for s in 1..=3 {
        assert_eq!(seq_of(&recv(&mut follower).await), Some(s));
    }

    let mut late = connect(&url).await;
    join(&mut late, "follower", "k").await;
    let snap = recv(&mut late).await;
    assert!(matches!(snap.body, ServerBody::Snapshot { .. }));
    assert_eq!(seq_of(&snap), Some(3));

    send(&mut presenter, state(2)).await;
    let notice = recv(&mut presenter).await;
    assert_eq!(error_code(&notice), ErrorCode::StaleSeq);
    assert!(matches!(notice.body, ServerBody::Error { seq: Some(2), .. }));

    send(&mut follower, state(10)).await;
    assert_eq!(error_code(&recv(&mut follower).await), ErrorCode::Unauthorized);

    send(&mut presenter, state(4)).await;
    assert_eq!(seq_of(&recv(&mut follower).await), Some(4));
    assert_eq!(seq_of(&recv(&mut late).await), Some(4));
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_messages_get_errors() {
    let server = common::start_memory().await;
    let mut ws = connect(&server.ws_url("r1")).await;
    ws.send(Message::Text("not json".into())).await.unwrap();
    assert_eq!(error_code(&recv(&mut ws).await), ErrorCode::BadMessage);
    send(&mut ws, json!({"v": 2, "type": "join", "role": "presenter", "key": "k"})).await;
    assert_eq!(error_code(&recv(&mut ws).await), ErrorCode::UnsupportedVersion);
    send(&mut ws, state(1)).await;
    assert_eq!(error_code(&recv(&mut ws).await), ErrorCode::NotJoined);
    join(&mut ws, "presenter", "").await;
    assert_eq!(error_code(&recv(&mut ws).await), ErrorCode::BadMessage);
    join(&mut ws, "presenter", "k").await;
    recv(&mut ws).await;
    join(&mut ws, "presenter", "k").await;
    assert_eq!(error_code(&recv(&mut ws).await), ErrorCode::AlreadyJoined);
    let mut bad = state(1);
    bad["state"]["camera"]["fov_y"] = json!(0.0);
    send(&mut ws, bad).await;
    assert_eq!(error_code(&recv(&mut ws).await), ErrorCode::InvalidState);

    let mut second = connect(&server.ws_url("r1")).await;
    join(&mut second, "presenter", "k").await;
    assert_eq!(error_code(&recv(&mut second).await), ErrorCode::Conflict);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn presenter_disconnect_freezes_until_rejoin_with_key() {
    let server = common::start_memory().await;
    let url = server.ws_url("class");
    let mut presenter = connect(&url).await;
    join(&mut presenter, "presenter", "secret").await;
    recv(&mut presenter).await;
    let mut follower = connect(&url).await;
    join(&mut follower, "follower", "secret").await;
    recv(&mut follower).await;
    send(&mut presenter, state(5)).await;
    assert_eq!(seq_of(&recv(&mut follower).await), Some(5));

    presenter.close(None).await.unwrap();
    drop(presenter);
    assert_eq!(error_code(&recv(&mut follower).await), ErrorCode::PresenterLeft);
    send(&mut follower, state(6)).await;
    assert_eq!(error_code(&recv(&mut follower).await), ErrorCode::Unauthorized);

    let mut intruder = connect(&url).await;
    join(&mut intruder, "presenter", "guess").await;
    assert_eq!(error_code(&recv(&mut intruder).await), ErrorCode::Unauthorized);

    let mut back = connect(&url).await;
    join(&mut back, "presenter", "secret").await;
    assert_eq!(seq_of(&recv(&mut back).await), Some(5));
    send(&mut back, state(5)).await;
    assert_eq!(error_code(&recv(&mut back).await), ErrorCode::StaleSeq);
    send(&mut back, state(6)).await;
    assert_eq!(seq_of(&recv(&mut follower).await), Some(6));
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn shutdown_closes_open_sessions() {
    let server = common::start_memory().await;
    let mut ws = connect(&server.ws_url("r")).await;
    join(&mut ws, "presenter", "k").await;
    recv(&mut ws).await;
    let stopping = tokio::spawn(server.stop());
    assert_eq!(error_code(&recv(&mut ws).await), ErrorCode::ShuttingDown);
    tokio::time::timeout(Duration::from_secs(10), stopping).await.unwrap().unwrap();
}
