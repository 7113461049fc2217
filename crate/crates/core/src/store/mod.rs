//! Persistent record of messages, sentences, suggestions and annotations.
//!
//! Writes go through [`AnnotationStore::commit`]: a batch of [`StoreOp`]s is
//! applied atomically. Suggestions and annotations live in separate
//! collections and are never merged.

mod memory;
mod shared;
mod sqlite;

pub use memory::MemoryStore;
pub use shared::SharedStore;
pub use sqlite::{SqliteStore, SCHEMA_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consent::RoomSession;
use crate::model::{Annotation, Message, MessageId, RoomId, Sentence, Suggestion, Timestamp};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("sqlite: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("stored row is malformed: {0}")]
    Corrupt(String),
    #[error("store schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("message {0} already stored")]
    Duplicate(MessageId),
    #[error("store is closed")]
    Closed,
}

/// Marker left behind after a redaction: id and time only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tombstone {
    pub message: MessageId,
    pub redacted_at: Timestamp,
    /// Erased content has been purged from the storage medium.
    pub flushed: bool,
}

/// Links a bot suggestion prompt to the message it labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt: MessageId,
    pub message: MessageId,
    pub room: RoomId,
}

/// The bot (re)entered recording in a room; always starts a new dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomReset {
    pub room: RoomId,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoreOp {
    Message { message: Message, sentences: Vec<Sentence> },
    Suggestion(Suggestion),
    Annotation(Annotation),
    /// Marks every suggestion and annotation of a message as superseded.
    SupersedeLabels(MessageId),
    /// Erases the body, sentences, suggestions and annotations of a message.
    Redact { message: MessageId, at: Timestamp },
    Prompt(PromptRecord),
    Session(RoomSession),
    Reset(RoomReset),
}

/// Full consistent copy of the store contents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreSnapshot {
    /// Insertion order.
    pub messages: Vec<Message>,
    pub sentences: Vec<Sentence>,
    pub suggestions: Vec<Suggestion>,
    /// Insertion order; later rows win under `last-wins`.
    pub annotations: Vec<Annotation>,
    pub tombstones: Vec<Tombstone>,
    pub prompts: Vec<PromptRecord>,
    pub resets: Vec<RoomReset>,
    pub sessions: Vec<RoomSession>,
}

impl StoreSnapshot {
    pub fn has_unflushed_redactions(&self) -> bool {
        self.tombstones.iter().any(|t| !t.flushed)
    }
}

pub trait AnnotationStore {
    /// Applies all ops in one transaction.
    fn commit(&mut self, ops: Vec<StoreOp>) -> Result<(), StoreError>;

    /// Purges erased content and marks tombstones flushed.
    fn compact(&mut self) -> Result<(), StoreError>;

    fn message(&self, id: &MessageId) -> Result<Option<Message>, StoreError>;

    /// The message whose `supersedes` points at `id`, if any.
    fn successor(&self, id: &MessageId) -> Result<Option<MessageId>, StoreError>;

    fn sentences(&self, message: &MessageId) -> Result<Vec<Sentence>, StoreError>;

    /// Suggestions of a message that are not superseded.
    fn active_suggestions(&self, message: &MessageId) -> Result<Vec<Suggestion>, StoreError>;

    fn prompt(&self, prompt: &MessageId) -> Result<Option<PromptRecord>, StoreError>;

    fn snapshot(&self) -> Result<StoreSnapshot, StoreError>;

    /// Follows the edit chain from `id` to its newest version.
    fn chain_head(&self, id: &MessageId) -> Result<MessageId, StoreError> {
        let mut current = id.clone();
        while let Some(next) = self.successor(&current)? {
            current = next;
        }
        Ok(current)
    }

    /// Every version in the edit chain containing `id`, oldest first.
    fn chain(&self, id: &MessageId) -> Result<Vec<MessageId>, StoreError> {
        let mut root = id.clone();
        while let Some(prev) = self.message(&root)?.and_then(|m| m.supersedes) {
            if self.message(&prev)?.is_none() {
                break;
            }
            root = prev;
        }
        let mut out = vec![root.clone()];
        while let Some(next) = self.successor(out.last().expect("non-empty"))? {
            out.push(next);
        }
        Ok(out)
    }
}

impl<S: AnnotationStore + ?Sized> AnnotationStore for Box<S> {
    fn commit(&mut self, ops: Vec<StoreOp>) -> Result<(), StoreError> {
        (**self).commit(ops)
    }
    fn compact(&mut self) -> Result<(), StoreError> {
        (**self).compact()
    }
    fn message(&self, id: &MessageId) -> Result<Option<Message>, StoreError> {
        (**self).message(id)
    }
    fn successor(&self, id: &MessageId) -> Result<Option<MessageId>, StoreError> {
        (**self).successor(id)
    }
    fn sentences(&self, message: &MessageId) -> Result<Vec<Sentence>, StoreError> {
        (**self).sentences(message)
    }
    fn active_suggestions(&self, message: &MessageId) -> Result<Vec<Suggestion>, StoreError> {
        (**self).active_suggestions(message)
    }
    fn prompt(&self, prompt: &MessageId) -> Result<Option<PromptRecord>, StoreError> {
        (**self).prompt(prompt)
    }
    fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        (**self).snapshot()
    }
}
