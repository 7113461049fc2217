//! Matrix client-server API binding.
//!
//! Translates `/sync` responses into [`TransportEvent`]s and commands into
//! client-server requests. Encryption is not handled here: run the bot
//! behind an E2EE-aware proxy (for example pantalaimon) so that it receives
//! decrypted events. Still-encrypted events (`m.room.encrypted`) are dropped.
//!
//! Connection settings come from the environment only:
//! `FLOORBOT_MATRIX_HOMESERVER`, `FLOORBOT_MATRIX_USER`, `FLOORBOT_MATRIX_TOKEN`.

use std::collections::{BTreeSet, VecDeque};
use std::time::Duration;

use log::{debug, warn};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde_json::{json, Value};

use super::{Ack, CommandSink, Envelope, Transport, TransportCommand, TransportError, TransportEvent};
use crate::model::{Message, MessageId, RoomId, UserId};

pub const HOMESERVER_ENV: &str = "FLOORBOT_MATRIX_HOMESERVER";
pub const USER_ENV: &str = "FLOORBOT_MATRIX_USER";
pub const TOKEN_ENV: &str = "FLOORBOT_MATRIX_TOKEN";

/// Custom content key carrying the purpose of a bot message.
pub const KIND_KEY: &str = "org.floorbot.kind";

const PATH_SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.').remove(b'~');

#[derive(Debug, Clone)]
pub struct MatrixConfig {
    pub homeserver: String,
    pub user: UserId,
    pub access_token: String,
    pub sync_timeout_ms: u64,
}

impl MatrixConfig {
    pub fn from_env() -> Result<Self, String> {
        let var = |name: &str| std::env::var(name).map_err(|_| format!("{name} is not set"));
        Ok(Self {
            homeserver: var(HOMESERVER_ENV)?.trim_end_matches('/').to_string(),
            user: UserId::new(var(USER_ENV)?).map_err(|e| e.to_string())?,
            access_token: var(TOKEN_ENV)?,
            sync_timeout_ms: 30_000,
        })
    }
}

fn str_at<'a>(v: &'a Value, path: &[&str]) -> Option<&'a str> {
    let mut cur = v;
    for key in path {
        cur = cur.get(key)?;
    }
    cur.as_str()
}

fn ids<T>(raw: Option<&str>, make: fn(String) -> Result<T, crate::model::ModelError>) -> Option<T> {
    raw.and_then(|s| make(s.to_string()).ok())
}

/// Converts one timeline event of a joined room.
pub fn translate_event(bot: &UserId, room: &RoomId, ev: &Value) -> Option<Envelope> {
    let at = ev.get("origin_server_ts").and_then(Value::as_i64).unwrap_or_default();
    let sender = ids(str_at(ev, &["sender"]), UserId::new)?;
    let event_id = ids(str_at(ev, &["event_id"]), MessageId::new);
    let content = ev.get("content").cloned().unwrap_or(Value::Null);
    let event = match str_at(ev, &["type"])? {
        "m.room.member" => {
            let subject = ids(str_at(ev, &["state_key"]), UserId::new)?;
            let membership = str_at(&content, &["membership"])?;
            match (membership, &subject == bot) {
                ("leave" | "ban", true) if sender != *bot => TransportEvent::BotRemoved { room: room.clone() },
                ("join", false) => TransportEvent::MemberJoined { room: room.clone(), user: subject },
                ("leave" | "ban", false) => TransportEvent::MemberLeft { room: room.clone(), user: subject },
                _ => return None,
            }
        }
        "m.room.message" => {
            let id = event_id?;
            if str_at(&content, &["m.relates_to", "rel_type"]) == Some("m.replace") {
                let original = ids(str_at(&content, &["m.relates_to", "event_id"]), MessageId::new)?;
                let body = str_at(&content, &["m.new_content", "body"])?;
                let mut message = Message::new(id, room.clone(), sender, at, body);
                message.supersedes = Some(original);
                TransportEvent::MessageEdited { message }
            } else {
                let body = str_at(&content, &["body"])?;
                TransportEvent::MessageReceived { message: Message::new(id, room.clone(), sender, at, body) }
            }
        }
        "m.reaction" => {
            if str_at(&content, &["m.relates_to", "rel_type"]) != Some("m.annotation") {
                return None;
            }
            TransportEvent::ReactionReceived {
                room: room.clone(),
                target: ids(str_at(&content, &["m.relates_to", "event_id"]), MessageId::new)?,
                user: sender,
                symbol: str_at(&content, &["m.relates_to", "key"])?.to_string(),
            }
        }
        "m.room.redaction" => {
            let target = str_at(ev, &["redacts"]).or_else(|| str_at(&content, &["redacts"]));
            TransportEvent::MessageRedacted { room: room.clone(), target: ids(target, MessageId::new)? }
        }
        "m.room.encrypted" => {
            debug!("dropping undecrypted event in {room}");
            return None;
        }
        _ => return None,
    };
    Some(Envelope { at, event })
}

/// Converts a `/sync` response body. Timeline events are skipped when
/// `include_timeline` is false (the first sync after startup).
pub fn translate_sync(bot: &UserId, sync: &Value, include_timeline: bool) -> Vec<Envelope> {
    let mut out = Vec::new();
    let rooms = |section: &str| -> Vec<(RoomId, &Value)> {
        sync.get("rooms")
            .and_then(|r| r.get(section))
            .and_then(Value::as_object)
            .map(|m| {
                m.iter()
                    .filter_map(|(k, v)| RoomId::new(k.clone()).ok().map(|id| (id, v)))
                    .collect()
            })
            .unwrap_or_default()
    };

    for (room, data) in rooms("invite") {
        let events = data
            .pointer("/invite_state/events")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        let mut invited = false;
        let mut at = 0;
        let mut members = BTreeSet::new();
        for ev in &events {
            if str_at(ev, &["type"]) != Some("m.room.member") {
                continue;
            }
            let subject = str_at(ev, &["state_key"]);
            let membership = str_at(ev, &["content", "membership"]);
            if subject == Some(bot.as_str()) && membership == Some("invite") {
                invited = true;
                at = ev.get("origin_server_ts").and_then(Value::as_i64).unwrap_or_default();
                if let Some(inviter) = ids(str_at(ev, &["sender"]), UserId::new) {
                    members.insert(inviter);
                }
            } else if membership == Some("join") {
                if let Some(u) = ids(subject, UserId::new) {
                    members.insert(u);
                }
            }
        }
        if invited {
            out.push(Envelope { at, event: TransportEvent::Invited { room, members } });
        }
    }

    for section in ["join", "leave"] {
        for (room, data) in rooms(section) {
            let events = data
                .pointer("/timeline/events")
                .and_then(Value::as_array)
                .cloned()
                .unwrap_or_default();
            for ev in &events {
                let Some(env) = translate_event(bot, &room, ev) else { continue };
                let removal = matches!(env.event, TransportEvent::BotRemoved { .. });
                if include_timeline || removal {
                    out.push(env);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub method: &'static str,
    pub path: String,
    pub body: Value,
}

fn seg(s: &str) -> String {
    utf8_percent_encode(s, PATH_SEGMENT).to_string()
}

/// The client-server request for a command. `txn` must be unique per
/// access token.
pub fn command_request(command: &TransportCommand, txn: &str) -> HttpRequest {
    match command {
        TransportCommand::SendMessage { room, body, kind, reply_to } => {
            let mut content = json!({ "msgtype": "m.notice", "body": body, KIND_KEY: kind });
            if let Some(parent) = reply_to {
                content["m.relates_to"] = json!({ "m.in_reply_to": { "event_id": parent } });
            }
            HttpRequest {
                method: "PUT",
                path: format!("/_matrix/client/v3/rooms/{}/send/m.room.message/{}", seg(room.as_str()), seg(txn)),
                body: content,
            }
        }
        TransportCommand::SendReaction { room, target, symbol } => HttpRequest {
            method: "PUT",
            path: format!("/_matrix/client/v3/rooms/{}/send/m.reaction/{}", seg(room.as_str()), seg(txn)),
            body: json!({ "m.relates_to": { "rel_type": "m.annotation", "event_id": target, "key": symbol } }),
        },
        TransportCommand::JoinRoom { room } => HttpRequest {
            method: "POST",
            path: format!("/_matrix/client/v3/join/{}", seg(room.as_str())),
            body: json!({}),
        },
        TransportCommand::LeaveRoom { room } => HttpRequest {
            method: "POST",
            path: format!("/_matrix/client/v3/rooms/{}/leave", seg(room.as_str())),
            body: json!({}),
        },
    }
}

fn classify_status(status: u16, body: &str) -> TransportError {
    let msg = format!("HTTP {status}: {body}");
    if status == 429 || status >= 500 {
        TransportError::Retriable(msg)
    } else {
        TransportError::Terminal(msg)
    }
}

/// Long-polling Matrix client.
pub struct MatrixTransport {
    config: MatrixConfig,
    agent: ureq::Agent,
    since: Option<String>,
    buffer: VecDeque<Envelope>,
    txn: u64,
}

impl MatrixTransport {
    pub fn new(config: MatrixConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.sync_timeout_ms + 15_000)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent, since: None, buffer: VecDeque::new(), txn: 0 }
    }

    fn call(&self, req: &HttpRequest) -> Result<Value, TransportError> {
        let url = format!("{}{}", self.config.homeserver, req.path);
        let auth = format!("Bearer {}", self.config.access_token);
        let result = match req.method {
            "GET" => self.agent.get(&url).header("Authorization", &auth).call(),
            "PUT" => self.agent.put(&url).header("Authorization", &auth).send_json(&req.body),
            _ => self.agent.post(&url).header("Authorization", &auth).send_json(&req.body),
        };
        let mut resp = result.map_err(|e| TransportError::Retriable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Retriable(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Retriable(format!("bad JSON from server: {e}")))
    }

    fn sync(&mut self) -> Result<(), TransportError> {
        let mut path = format!("/_matrix/client/v3/sync?timeout={}", self.config.sync_timeout_ms);
        if let Some(since) = &self.since {
            path.push_str(&format!("&since={}", seg(since)));
        }
        let body = self.call(&HttpRequest { method: "GET", path, body: Value::Null })?;
        let first = self.since.is_none();
        self.buffer
            .extend(translate_sync(&self.config.user, &body, !first));
        match body.get("next_batch").and_then(Value::as_str) {
            Some(next) => self.since = Some(next.to_string()),
            None => warn!("sync response without next_batch"),
        }
        Ok(())
    }
}

impl CommandSink for MatrixTransport {
    fn execute(&mut self, command: TransportCommand) -> Result<Ack, TransportError> {
        self.txn += 1;
        let txn = format!("floorbot-{}-{}", std::process::id(), self.txn);
        let reply = self.call(&command_request(&command, &txn))?;
        match (&command, reply.get("event_id").and_then(Value::as_str)) {
            (TransportCommand::SendMessage { .. }, Some(id)) => Ok(Ack::Sent(
                MessageId::new(id).map_err(|e| TransportError::Terminal(e.to_string()))?,
            )),
            (TransportCommand::SendMessage { .. }, None) => {
                Err(TransportError::Terminal("send reply without event_id".into()))
            }
            _ => Ok(Ack::Done),
        }
    }
}

impl Transport for MatrixTransport {
    fn next_event(&mut self) -> Result<Option<Envelope>, TransportError> {
        while self.buffer.is_empty() {
            self.sync()?;
        }
        Ok(self.buffer.pop_front())
    }
}
