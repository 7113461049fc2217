//! Chat transport contract.
//!
//! The bot consumes [`Envelope`]s and issues [`TransportCommand`]s. Events
//! of rooms the bot is not a member of are never delivered, live or later;
//! invites addressed to the bot are the only exception.

pub mod matrix;
mod scenario;
mod simulator;

pub use scenario::{Expectations, Scenario, ScenarioError, Step, Target};
pub use simulator::{SimReport, Simulator, TraceEntry};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Message, MessageId, RoomId, Timestamp, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TransportEvent {
    Invited { room: RoomId, members: BTreeSet<UserId> },
    MemberJoined { room: RoomId, user: UserId },
    MemberLeft { room: RoomId, user: UserId },
    BotRemoved { room: RoomId },
    MessageReceived { message: Message },
    ReactionReceived { room: RoomId, target: MessageId, user: UserId, symbol: String },
    /// `message.supersedes` names the edited message.
    MessageEdited { message: Message },
    MessageRedacted { room: RoomId, target: MessageId },
}

impl TransportEvent {
    pub fn room(&self) -> &RoomId {
        match self {
            TransportEvent::Invited { room, .. }
            | TransportEvent::MemberJoined { room, .. }
            | TransportEvent::MemberLeft { room, .. }
            | TransportEvent::BotRemoved { room }
            | TransportEvent::ReactionReceived { room, .. }
            | TransportEvent::MessageRedacted { room, .. } => room,
            TransportEvent::MessageReceived { message } | TransportEvent::MessageEdited { message } => &message.room,
        }
    }
}

/// An event with its delivery time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub at: Timestamp,
    pub event: TransportEvent,
}

/// Purpose of a message the bot sends; lets transports and scenarios refer
/// to bot prompts without parsing their text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutgoingKind {
    ConsentPrompt,
    Notification,
    SuggestionPrompt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TransportCommand {
    SendMessage {
        room: RoomId,
        body: String,
        kind: OutgoingKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reply_to: Option<MessageId>,
    },
    SendReaction { room: RoomId, target: MessageId, symbol: String },
    JoinRoom { room: RoomId },
    LeaveRoom { room: RoomId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ack {
    Sent(MessageId),
    Done,
}

#[derive(Debug, Error)]
pub enum TransportError {
    /// Network trouble; the command or poll may be retried.
    #[error("transient transport failure: {0}")]
    Retriable(String),
    /// The server refused; retrying will not help.
    #[error("transport refused: {0}")]
    Terminal(String),
}

/// Where the bot sends commands.
pub trait CommandSink {
    fn execute(&mut self, command: TransportCommand) -> Result<Ack, TransportError>;
}

pub trait Transport: CommandSink {
    /// Next event in per-room delivery order, or `None` when the stream has
    /// ended (a finished scenario, a shutdown).
    fn next_event(&mut self) -> Result<Option<Envelope>, TransportError>;
}
