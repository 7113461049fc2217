//! Declarative simulator scenarios (TOML, `version = 1`).
//!
//! ```toml
//! version = 1
//! bot = "@floorbot:sim"
//! auto_invite = true
//!
//! [[step]]
//! at = 0
//! action = "create_room"
//! room = "!line3"
//! members = ["@alice", "@bob"]
//!
//! [[step]]
//! at = 1000
//! action = "react"
//! room = "!line3"
//! user = "@alice"
//! target = "consent"
//! symbol = "✅"
//! ```
//!
//! Reaction and edit targets are `consent` (latest consent prompt in the
//! room), `prompt:<id>` (latest suggestion prompt for message `<id>`) or a
//! plain message id.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consent::ConsentState;
use crate::model::{MessageId, RoomId, Timestamp, UserId};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("unsupported scenario version {0}")]
    Version(u32),
    #[error("step {index}: {message}")]
    Step { index: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Target {
    ConsentPrompt,
    PromptFor(MessageId),
    Message(MessageId),
}

impl FromStr for Target {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let id = |raw: &str| MessageId::new(raw).map_err(|e| e.to_string());
        match s {
            "consent" => Ok(Target::ConsentPrompt),
            _ => match s.strip_prefix("prompt:") {
                Some(rest) => Ok(Target::PromptFor(id(rest)?)),
                None => Ok(Target::Message(id(s.strip_prefix("msg:").unwrap_or(s))?)),
            },
        }
    }
}

impl TryFrom<String> for Target {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Target> for String {
    fn from(t: Target) -> Self {
        t.to_string()
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::ConsentPrompt => f.write_str("consent"),
            Target::PromptFor(id) => write!(f, "prompt:{id}"),
            Target::Message(id) => write!(f, "{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Step {
    /// Creates a room with its members; the server invites the bot when
    /// `auto_invite` is on.
    CreateRoom { room: RoomId, members: Vec<UserId> },
    InviteBot { room: RoomId },
    RemoveBot { room: RoomId },
    Join { room: RoomId, user: UserId },
    Leave { room: RoomId, user: UserId },
    Send {
        room: RoomId,
        user: UserId,
        body: String,
        #[serde(default)]
        id: Option<MessageId>,
    },
    React { room: RoomId, user: UserId, target: Target, symbol: String },
    Edit {
        room: RoomId,
        user: UserId,
        target: MessageId,
        body: String,
        #[serde(default)]
        id: Option<MessageId>,
    },
    Redact { room: RoomId, user: UserId, target: MessageId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedStep {
    pub at: Timestamp,
    #[serde(flatten)]
    pub step: Step,
}

/// Optional end-state checks, reported by `simulate`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub stored_messages: Option<usize>,
    pub annotations: Option<usize>,
    pub labeled_sentences: Option<usize>,
    #[serde(default)]
    pub states: BTreeMap<RoomId, ConsentState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    #[serde(default = "default_bot")]
    pub bot: UserId,
    /// Server-side invite of the bot into every newly created room.
    #[serde(default = "default_true")]
    pub auto_invite: bool,
    #[serde(default, rename = "step")]
    pub steps: Vec<TimedStep>,
    #[serde(default)]
    pub expect: Expectations,
}

fn default_bot() -> UserId {
    UserId::new("@floorbot:sim").expect("non-empty")
}

fn default_true() -> bool {
    true
}

impl Scenario {
    pub fn new(bot: UserId) -> Self {
        Self {
            version: SCENARIO_VERSION,
            bot,
            auto_invite: true,
            steps: Vec::new(),
            expect: Expectations::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        if scenario.version != SCENARIO_VERSION {
            return Err(ScenarioError::Version(scenario.version));
        }
        for (index, s) in scenario.steps.iter().enumerate() {
            let who = match &s.step {
                Step::Join { user, .. }
                | Step::Leave { user, .. }
                | Step::Send { user, .. }
                | Step::React { user, .. }
                | Step::Edit { user, .. }
                | Step::Redact { user, .. } => Some(user),
                _ => None,
            };
            if who == Some(&scenario.bot) {
                return Err(ScenarioError::Step {
                    index,
                    message: "steps cannot act as the bot".into(),
                });
            }
            if let Step::Send { body, .. } | Step::Edit { body, .. } = &s.step {
                if body.is_empty() {
                    return Err(ScenarioError::Step { index, message: "empty message body".into() });
                }
            }
        }
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn push(&mut self, at: Timestamp, step: Step) -> &mut Self {
        self.steps.push(TimedStep { at, step });
        self
    }
}
