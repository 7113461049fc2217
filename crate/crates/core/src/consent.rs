//! Per-room recording consent.
//!
//! ```text
//!   invite ─► Invited ─► AwaitingConsent ──accept quorum──► Recording
//!                            │    │                             │
//!                   reject ◄─┘    └─► chat message              │ bot removed
//!                      │               │                        ▼
//!                  Declined        Departed ◄──────────── (any state)
//!                      └──── re-invite ───┴──► AwaitingConsent (fresh)
//! ```
//!
//! Messages may only be persisted while a session is `Recording`.

use std::collections::{BTreeMap, BTreeSet};

use log::info;
use serde::{Deserialize, Serialize};

use crate::model::{MessageId, RoomId, Timestamp, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsentState {
    Invited,
    AwaitingConsent,
    Recording,
    Declined,
    Departed,
}

impl ConsentState {
    /// The bot is in the room and may send messages.
    pub fn is_present(self) -> bool {
        matches!(self, ConsentState::AwaitingConsent | ConsentState::Recording)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    Accept,
    Reject,
}

/// How many accept votes are needed before recording starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsentPolicy {
    /// Every current member has accepted.
    Unanimous,
    /// At least one member has accepted and nobody rejected.
    #[default]
    FirstAccept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsentConfig {
    pub policy: ConsentPolicy,
    /// Ask for consent again when somebody joins a recorded room.
    pub reconsent_on_join: bool,
}

/// Side effects requested by a transition, executed by the caller in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConsentEffect {
    JoinRoom,
    SendPrompt,
    SendNotification,
    LeaveRoom,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: ConsentState,
    pub to: ConsentState,
    pub effects: Vec<ConsentEffect>,
}

impl Transition {
    fn stay(state: ConsentState) -> Self {
        Self { from: state, to: state, effects: Vec::new() }
    }

    pub fn is_noop(&self) -> bool {
        self.from == self.to && self.effects.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomSession {
    pub room: RoomId,
    pub state: ConsentState,
    pub members: BTreeSet<UserId>,
    pub consent_votes: BTreeMap<UserId, Vote>,
    pub entered_at: Timestamp,
    /// The consent prompt the bot sent in this session, once acknowledged.
    #[serde(default)]
    pub prompt: Option<MessageId>,
}

impl RoomSession {
    pub fn new(room: RoomId, members: BTreeSet<UserId>, at: Timestamp) -> Self {
        Self {
            room,
            state: ConsentState::Invited,
            members,
            consent_votes: BTreeMap::new(),
            entered_at: at,
            prompt: None,
        }
    }

    fn move_to(&mut self, to: ConsentState, at: Timestamp, effects: Vec<ConsentEffect>) -> Transition {
        let from = self.state;
        if from != to {
            info!("room {}: {:?} -> {:?}", self.room, from, to);
            self.entered_at = at;
        }
        self.state = to;
        Transition { from, to, effects }
    }

    /// Invited -> AwaitingConsent, asking the room for consent.
    pub fn start(&mut self, at: Timestamp) -> Transition {
        if self.state != ConsentState::Invited {
            return Transition::stay(self.state);
        }
        self.move_to(
            ConsentState::AwaitingConsent,
            at,
            vec![ConsentEffect::JoinRoom, ConsentEffect::SendPrompt],
        )
    }

    pub fn on_consent_reaction(&mut self, config: &ConsentConfig, user: &UserId, vote: Vote, at: Timestamp) -> Transition {
        if self.state != ConsentState::AwaitingConsent {
            return Transition::stay(self.state);
        }
        if !self.members.contains(user) {
            info!("room {}: ignoring consent vote from non-member {user}", self.room);
            return Transition::stay(self.state);
        }
        self.consent_votes.insert(user.clone(), vote);
        if vote == Vote::Reject {
            return self.move_to(ConsentState::Declined, at, vec![ConsentEffect::LeaveRoom]);
        }
        self.check_quorum(config, at)
    }

    fn check_quorum(&mut self, config: &ConsentConfig, at: Timestamp) -> Transition {
        let accepts = self
            .consent_votes
            .values()
            .filter(|v| **v == Vote::Accept)
            .count();
        let rejected = self.consent_votes.values().any(|v| *v == Vote::Reject);
        let reached = !rejected
            && accepts > 0
            && match config.policy {
                ConsentPolicy::FirstAccept => true,
                ConsentPolicy::Unanimous => self
                    .members
                    .iter()
                    .all(|m| self.consent_votes.get(m) == Some(&Vote::Accept)),
            };
        if reached {
            self.move_to(ConsentState::Recording, at, vec![ConsentEffect::SendNotification])
        } else {
            Transition::stay(self.state)
        }
    }

    /// A chat message arrived before anyone answered the prompt.
    ///
    /// `sender` is compared against the bot's own account so that the echo
    /// of the prompt does not count.
    pub fn on_message_while_awaiting(&mut self, bot: &UserId, sender: &UserId, at: Timestamp) -> Transition {
        if self.state != ConsentState::AwaitingConsent || sender == bot {
            return Transition::stay(self.state);
        }
        self.move_to(ConsentState::Departed, at, vec![ConsentEffect::LeaveRoom])
    }

    pub fn on_bot_removed(&mut self, at: Timestamp) -> Transition {
        if matches!(self.state, ConsentState::Departed | ConsentState::Declined) {
            return Transition::stay(self.state);
        }
        self.move_to(ConsentState::Departed, at, Vec::new())
    }

    /// Fresh consent round after a Departed or Declined session.
    pub fn on_reinvite(&mut self, members: BTreeSet<UserId>, at: Timestamp) -> Transition {
        if !matches!(self.state, ConsentState::Departed | ConsentState::Declined) {
            return Transition::stay(self.state);
        }
        let from = self.state;
        self.consent_votes.clear();
        self.prompt = None;
        if !members.is_empty() {
            self.members = members;
        }
        self.state = ConsentState::Invited;
        Transition { from, ..self.start(at) }
    }

    pub fn on_member_joined(&mut self, config: &ConsentConfig, user: UserId, at: Timestamp) -> Transition {
        let fresh = self.members.insert(user);
        if fresh && config.reconsent_on_join && self.state == ConsentState::Recording {
            self.consent_votes.clear();
            self.prompt = None;
            return self.move_to(ConsentState::AwaitingConsent, at, vec![ConsentEffect::SendPrompt]);
        }
        Transition::stay(self.state)
    }

    pub fn on_member_left(&mut self, config: &ConsentConfig, user: &UserId, at: Timestamp) -> Transition {
        self.members.remove(user);
        self.consent_votes.remove(user);
        if self.state == ConsentState::AwaitingConsent {
            return self.check_quorum(config, at);
        }
        Transition::stay(self.state)
    }
}

/// All room sessions known to one bot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConsentEngine {
    pub config: ConsentConfig,
    sessions: BTreeMap<RoomId, RoomSession>,
}

impl ConsentEngine {
    pub fn new(config: ConsentConfig) -> Self {
        Self { config, sessions: BTreeMap::new() }
    }

    pub fn restore(config: ConsentConfig, sessions: impl IntoIterator<Item = RoomSession>) -> Self {
        Self {
            config,
            sessions: sessions.into_iter().map(|s| (s.room.clone(), s)).collect(),
        }
    }

    pub fn session(&self, room: &RoomId) -> Option<&RoomSession> {
        self.sessions.get(room)
    }

    pub fn session_mut(&mut self, room: &RoomId) -> Option<&mut RoomSession> {
        self.sessions.get_mut(room)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &RoomSession> {
        self.sessions.values()
    }

    pub fn state(&self, room: &RoomId) -> Option<ConsentState> {
        self.sessions.get(room).map(|s| s.state)
    }

    /// Handles an invite for the bot. A duplicate invite for an active
    /// session is a no-op; an invite after Departed/Declined is a re-invite.
    pub fn on_invite(&mut self, room: &RoomId, members: BTreeSet<UserId>, at: Timestamp) -> Transition {
        match self.sessions.get_mut(room) {
            None => {
                let mut session = RoomSession::new(room.clone(), members, at);
                let t = session.start(at);
                self.sessions.insert(room.clone(), session);
                Transition { from: ConsentState::Invited, ..t }
            }
            Some(s) if matches!(s.state, ConsentState::Departed | ConsentState::Declined) => {
                s.on_reinvite(members, at)
            }
            Some(s) => Transition::stay(s.state),
        }
    }
}
