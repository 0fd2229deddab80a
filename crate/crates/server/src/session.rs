//! Live presenter sessions. Each room is owned by one mutex; every state
//! accepted from the presenter is queued to each follower while that mutex
//! is held, so followers observe a single total order per room.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, watch};

use crate::error::WIRE_VERSION;
use crate::model::SessionState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Presenter,
    Follower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientBody {
    Join { role: Role, key: String },
    State { state: SessionState },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    pub v: u32,
    #[serde(flatten)]
    pub body: ClientBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    UnsupportedVersion,
    InvalidState,
    NotJoined,
    AlreadyJoined,
    NotFound,
    Unauthorized,
    Conflict,
    StaleSeq,
    PresenterLeft,
    ShuttingDown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerBody {
    /// Sent once after a successful join. `state` is the room's latest
    /// state, absent until the presenter has sent one.
    Snapshot {
        room_id: String,
        client_id: String,
        role: Role,
        state: Option<SessionState>,
    },
    State {
        state: SessionState,
    },
    Error {
        code: ErrorCode,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub v: u32,
    #[serde(flatten)]
    pub body: ServerBody,
}

impl ServerMessage {
    pub fn new(body: ServerBody) -> Self {
        ServerMessage { v: WIRE_VERSION, body }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Self::new(ServerBody::Error {
            code,
            message: message.into(),
            seq: None,
        })
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Outgoing queue of one connection, carrying serialized messages.
pub type Outbox = mpsc::UnboundedSender<String>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("room {0} does not exist")]
    NotFound(String),
    #[error("wrong key for room {0}")]
    Unauthorized(String),
    #[error("only the presenter may send state")]
    NotPresenter,
    #[error("room {0} already has a presenter")]
    PresenterTaken(String),
    #[error("seq {seq} is not greater than the latest seq {latest}")]
    StaleSeq { seq: u64, latest: u64 },
    #[error("a room key must not be empty")]
    EmptyKey,
}

impl SessionError {
    pub fn code(&self) -> ErrorCode {
        match self {
            SessionError::NotFound(_) => ErrorCode::NotFound,
            SessionError::Unauthorized(_) | SessionError::NotPresenter => ErrorCode::Unauthorized,
            SessionError::PresenterTaken(_) => ErrorCode::Conflict,
            SessionError::StaleSeq { .. } => ErrorCode::StaleSeq,
            SessionError::EmptyKey => ErrorCode::BadMessage,
        }
    }
}

struct Room {
    key: String,
    presenter: Option<String>,
    followers: HashMap<String, Outbox>,
    latest: Option<SessionState>,
}

/// Public view of a room.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomInfo {
    pub presenter: Option<String>,
    pub followers: usize,
    pub latest_seq: Option<u64>,
}

/// Registry of session rooms. A presenter join creates its room; the room
/// lives on, frozen at its latest state, after the presenter leaves.
#[derive(Default)]
pub struct SessionHub {
    rooms: Mutex<HashMap<String, Arc<Mutex<Room>>>>,
}

impl SessionHub {
    pub fn new() -> Self {
        Self::default()
    }

    fn room(&self, room_id: &str) -> Option<Arc<Mutex<Room>>> {
        self.rooms.lock().unwrap().get(room_id).cloned()
    }

    pub fn room_info(&self, room_id: &str) -> Option<RoomInfo> {
        let room = self.room(room_id)?;
        let r = room.lock().unwrap();
        Some(RoomInfo {
            presenter: r.presenter.clone(),
            followers: r.followers.len(),
            latest_seq: r.latest.as_ref().map(|s| s.seq),
        })
    }

    /// Joins `client_id` to a room and queues its snapshot to `outbox`.
    pub fn join(
        &self,
        room_id: &str,
        role: Role,
        key: &str,
        client_id: &str,
        outbox: &Outbox,
    ) -> Result<(), SessionError> {
        let room = match role {
            Role::Presenter => {
                if key.is_empty() {
                    return Err(SessionError::EmptyKey);
                }
                self.rooms
                    .lock()
                    .unwrap()
                    .entry(room_id.to_string())
                    .or_insert_with(|| {
                        log::info!("room {room_id} created");
                        Arc::new(Mutex::new(Room {
                            key: key.to_string(),
                            presenter: None,
                            followers: HashMap::new(),
                            latest: None,
                        }))
                    })
                    .clone()
            }
            Role::Follower => self
                .room(room_id)
                .ok_or_else(|| SessionError::NotFound(room_id.to_string()))?,
        };
        let mut r = room.lock().unwrap();
        if r.key != key {
            return Err(SessionError::Unauthorized(room_id.to_string()));
        }
        match role {
            Role::Presenter if r.presenter.is_some() => {
                return Err(SessionError::PresenterTaken(room_id.to_string()))
            }
            Role::Presenter => r.presenter = Some(client_id.to_string()),
            Role::Follower => {
                r.followers.insert(client_id.to_string(), outbox.clone());
            }
        }
        let snapshot = ServerMessage::new(ServerBody::Snapshot {
            room_id: room_id.to_string(),
            client_id: client_id.to_string(),
            role,
            state: r.latest.clone(),
        });
        let _ = outbox.send(snapshot.to_text());
        Ok(())
    }

    /// Accepts a state from the room's presenter and queues it to every
    /// follower.
    pub fn update(&self, room_id: &str, client_id: &str, state: SessionState) -> Result<(), SessionError> {
        let room = self
            .room(room_id)
            .ok_or_else(|| SessionError::NotFound(room_id.to_string()))?;
        let mut r = room.lock().unwrap();
        if r.presenter.as_deref() != Some(client_id) {
            return Err(SessionError::NotPresenter);
        }
        if let Some(latest) = &r.latest {
            if state.seq <= latest.seq {
                return Err(SessionError::StaleSeq {
                    seq: state.seq,
                    latest: latest.seq,
                });
            }
        }
        let text = ServerMessage::new(ServerBody::State { state: state.clone() }).to_text();
        r.followers.retain(|_, tx| tx.send(text.clone()).is_ok());
        r.latest = Some(state);
        Ok(())
    }

    /// Removes a client from a room. A departing presenter freezes the room
    /// and followers are told so.
    pub fn leave(&self, room_id: &str, client_id: &str) {
        let Some(room) = self.room(room_id) else {
            return;
        };
        let mut r = room.lock().unwrap();
        if r.presenter.as_deref() == Some(client_id) {
            r.presenter = None;
            log::info!("presenter left room {room_id}; room frozen");
            let notice = ServerMessage::error(
                ErrorCode::PresenterLeft,
                "the presenter disconnected; the room is frozen at its latest state",
            )
            .to_text();
            r.followers.retain(|_, tx| tx.send(notice.clone()).is_ok());
        } else {
            r.followers.remove(client_id);
        }
    }
}

/// Drives one websocket connection until it closes or `shutdown` fires.
pub async fn serve_socket(socket: WebSocket, room_id: String, hub: Arc<SessionHub>, mut shutdown: watch::Receiver<bool>) {
    let client_id = uuid::Uuid::new_v4().simple().to_string();
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    let writer = tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                return;
            }
        }
        let _ = sink.close().await;
    });

    let mut joined: Option<Role> = None;
    loop {
        let msg = tokio::select! {
            m = stream.next() => m,
            _ = shutdown.wait_for(|s| *s) => {
                let _ = tx.send(ServerMessage::error(ErrorCode::ShuttingDown, "server is shutting down").to_text());
                break;
            }
        };
        let text = match msg {
            Some(Ok(Message::Text(t))) => t,
            Some(Ok(Message::Binary(_))) => {
                let _ = tx.send(ServerMessage::error(ErrorCode::BadMessage, "binary frames are not accepted").to_text());
                continue;
            }
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
            Some(Ok(_)) => continue,
        };
        if let Some(reply) = handle_text(&hub, &room_id, &client_id, &mut joined, &tx, text.as_str()) {
            let _ = tx.send(reply.to_text());
        }
    }
    if joined.is_some() {
        hub.leave(&room_id, &client_id);
    }
    drop(tx);
    let _ = writer.await;
}

fn handle_text(
    hub: &SessionHub,
    room_id: &str,
    client_id: &str,
    joined: &mut Option<Role>,
    tx: &Outbox,
    text: &str,
) -> Option<ServerMessage> {
    let value: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return Some(ServerMessage::error(ErrorCode::BadMessage, format!("invalid JSON: {e}"))),
    };
    match value.get("v").and_then(|v| v.as_u64()) {
        Some(v) if v == WIRE_VERSION as u64 => {}
        Some(v) => {
            return Some(ServerMessage::error(
                ErrorCode::UnsupportedVersion,
                format!("message version {v} is not supported; expected {WIRE_VERSION}"),
            ))
        }
        None => return Some(ServerMessage::error(ErrorCode::BadMessage, "message lacks a numeric \"v\" field")),
    }
    let msg: ClientMessage = match serde_json::from_value(value) {
        Ok(m) => m,
        Err(e) => return Some(ServerMessage::error(ErrorCode::BadMessage, e.to_string())),
    };
    match msg.body {
        ClientBody::Join { .. } if joined.is_some() => {
            Some(ServerMessage::error(ErrorCode::AlreadyJoined, "this connection already joined"))
        }
        ClientBody::Join { role, key } => match hub.join(room_id, role, &key, client_id, tx) {
            Ok(()) => {
                *joined = Some(role);
                None
            }
            Err(e) => Some(ServerMessage::error(e.code(), e.to_string())),
        },
        ClientBody::State { .. } if joined.is_none() => {
            Some(ServerMessage::error(ErrorCode::NotJoined, "join the room before sending state"))
        }
        ClientBody::State { state } => {
            let seq = state.seq;
            let result = state
                .validate()
                .map_err(|m| (ErrorCode::InvalidState, m))
                .and_then(|()| hub.update(room_id, client_id, state).map_err(|e| (e.code(), e.to_string())));
            result.err().map(|(code, message)| {
                ServerMessage::new(ServerBody::Error {
                    code,
                    message,
                    seq: Some(seq),
                })
            })
        }
    }
}
