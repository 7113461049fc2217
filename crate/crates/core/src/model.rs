//! Shared vocabulary: identifiers, messages, sentences, labels and annotations.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds since the Unix epoch, UTC.
pub type Timestamp = i64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("identifier must not be empty")]
    EmptyId,
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("message {0} is referenced but does not exist")]
    MissingMessage(MessageId),
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self, ModelError> {
                let id = id.into();
                if id.is_empty() {
                    return Err(ModelError::EmptyId);
                }
                Ok(Self(id))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = ModelError;
            fn try_from(value: String) -> Result<Self, Self::Error> {
                Self::new(value)
            }
        }

        impl From<$name> for String {
            fn from(value: $name) -> Self {
                value.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

string_id!(
    /// Opaque chat account identifier.
    UserId
);
string_id!(
    /// Opaque chat room identifier.
    RoomId
);
string_id!(
    /// Opaque chat event identifier.
    MessageId
);

/// Sentence-level class of the shop-floor taxonomy.
///
/// The declaration order (P < C < S < O) is the tie-break order used by the
/// classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelClass {
    /// A deviation from an expected target state.
    #[serde(rename = "P")]
    Problem,
    /// The assumed cause of a problem.
    #[serde(rename = "C")]
    Cause,
    /// An action that removes the root cause or helps find it.
    #[serde(rename = "S")]
    Solution,
    /// Anything else.
    #[serde(rename = "O")]
    Other,
}

impl LabelClass {
    pub const ALL: [LabelClass; 4] = [
        LabelClass::Problem,
        LabelClass::Cause,
        LabelClass::Solution,
        LabelClass::Other,
    ];

    pub fn code(self) -> &'static str {
        match self {
            LabelClass::Problem => "P",
            LabelClass::Cause => "C",
            LabelClass::Solution => "S",
            LabelClass::Other => "O",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelClass::Problem => "Problem",
            LabelClass::Cause => "Cause",
            LabelClass::Solution => "Solution",
            LabelClass::Other => "Other",
        }
    }

    /// Position in [`LabelClass::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for LabelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for LabelClass {
    type Err = ModelError;

    /// Accepts the one-letter code or the full class name, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p" | "problem" => Ok(LabelClass::Problem),
            "c" | "cause" => Ok(LabelClass::Cause),
            "s" | "solution" => Ok(LabelClass::Solution),
            "o" | "other" => Ok(LabelClass::Other),
            _ => Err(ModelError::UnknownLabel(s.to_string())),
        }
    }
}

/// One chat message as seen by the bot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: MessageId,
    pub room: RoomId,
    pub sender: UserId,
    pub sent_at: Timestamp,
    pub body: String,
    /// Previous version when this message is an edit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supersedes: Option<MessageId>,
    #[serde(default)]
    pub redacted: bool,
}

impl Message {
    pub fn new(id: MessageId, room: RoomId, sender: UserId, sent_at: Timestamp, body: impl Into<String>) -> Self {
        Self {
            id,
            room,
            sender,
            sent_at,
            body: body.into(),
            supersedes: None,
            redacted: false,
        }
    }

    /// Ordering key: timestamp, then id for ties.
    pub fn order_key(&self) -> (Timestamp, &str) {
        (self.sent_at, self.id.as_str())
    }
}

/// Address of a sentence: the message and its 0-based ordinal inside it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceRef {
    pub message: MessageId,
    pub index: usize,
}

impl SentenceRef {
    pub fn new(message: MessageId, index: usize) -> Self {
        Self { message, index }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub message: MessageId,
    pub index: usize,
    pub text: String,
}

impl Sentence {
    pub fn sentence_ref(&self) -> SentenceRef {
        SentenceRef::new(self.message.clone(), self.index)
    }
}

/// A model-proposed label. Kept apart from [`Annotation`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub sentence: SentenceRef,
    pub label: LabelClass,
    pub score: f64,
    pub model_id: String,
    pub created_at: Timestamp,
    #[serde(default)]
    pub superseded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    Confirmed,
    Corrected,
}

/// A label given by a person, either accepting or replacing a suggestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub sentence: SentenceRef,
    pub label: LabelClass,
    pub annotator: UserId,
    pub kind: AnnotationKind,
    pub created_at: Timestamp,
    #[serde(default)]
    pub superseded: bool,
}

/// A bounded conversation inside one room.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub room: RoomId,
    /// Time-ordered.
    pub messages: Vec<MessageId>,
}

/// Number of maximal runs of consecutive messages by the same sender.
pub fn turns_of(dialogue: &Dialogue, messages: &HashMap<MessageId, Message>) -> Result<usize, ModelError> {
    let mut turns = 0;
    let mut last: Option<&UserId> = None;
    for id in &dialogue.messages {
        let msg = messages
            .get(id)
            .ok_or_else(|| ModelError::MissingMessage(id.clone()))?;
        if last != Some(&msg.sender) {
            turns += 1;
            last = Some(&msg.sender);
        }
    }
    Ok(turns)
}

/// Where one dialogue ends and the next begins inside a room.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DialogueBoundaries<'a> {
    /// Gap after which a new dialogue starts.
    pub idle_window_ms: i64,
    /// Membership resets (bot re-joins) that always start a new dialogue.
    pub resets: &'a [Timestamp],
}

pub const DEFAULT_IDLE_WINDOW_MS: i64 = 30 * 60 * 1000;

/// Split one room's messages into dialogues.
///
/// Messages are ordered by `(sent_at, id)` first. A new dialogue starts when
/// the gap to the previous message exceeds the idle window or when a reset
/// falls in `(previous, current]`.
pub fn split_dialogues(room: &RoomId, messages: &[&Message], bounds: DialogueBoundaries<'_>) -> Vec<Dialogue> {
    let mut sorted: Vec<&Message> = messages.to_vec();
    sorted.sort_by(|a, b| a.order_key().cmp(&b.order_key()));

    let mut dialogues: Vec<Dialogue> = Vec::new();
    let mut prev: Option<Timestamp> = None;
    for msg in sorted {
        let starts_new = match prev {
            None => true,
            Some(p) => {
                msg.sent_at - p > bounds.idle_window_ms
                    || bounds.resets.iter().any(|&r| r > p && r <= msg.sent_at)
            }
        };
        if starts_new {
            dialogues.push(Dialogue {
                id: dialogue_id(room, &msg.id),
                room: room.clone(),
                messages: Vec::new(),
            });
        }
        dialogues
            .last_mut()
            .expect("a dialogue was just pushed")
            .messages
            .push(msg.id.clone());
        prev = Some(msg.sent_at);
    }
    dialogues
}

/// Stable dialogue id derived from the room and the opening message.
pub fn dialogue_id(room: &RoomId, first: &MessageId) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(room.as_str().as_bytes());
    hasher.update([0u8]);
    hasher.update(first.as_str().as_bytes());
    format!("d-{}", &hex::encode(hasher.finalize())[..16])
}
