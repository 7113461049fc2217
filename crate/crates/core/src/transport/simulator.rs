//! Deterministic in-memory chat server driven by a [`Scenario`].
//!
//! Time is virtual: it only advances with scenario steps. Every event the
//! server produces is kept in the ground-truth trace together with whether
//! the bot could see it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;

use super::scenario::{Scenario, Step, Target, TimedStep};
use super::{Ack, CommandSink, Envelope, OutgoingKind, Transport, TransportCommand, TransportError, TransportEvent};
use crate::model::{Message, MessageId, RoomId, Timestamp, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub at: Timestamp,
    pub event: TransportEvent,
    pub delivered: bool,
    /// Produced by a bot command rather than a scenario step.
    pub from_bot: bool,
}

#[derive(Debug, Default, Clone)]
struct SimRoom {
    members: BTreeSet<UserId>,
    bot_member: bool,
    /// Bot messages: id, purpose, message replied to.
    bot_messages: Vec<(MessageId, OutgoingKind, Option<MessageId>)>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SimReport {
    pub trace: Vec<TraceEntry>,
    pub commands: Vec<(Timestamp, TransportCommand)>,
    /// Steps that could not be carried out, e.g. reacting to a prompt the
    /// bot never sent.
    pub skipped: Vec<String>,
}

impl SimReport {
    pub fn delivered(&self) -> impl Iterator<Item = &TraceEntry> {
        self.trace.iter().filter(|e| e.delivered)
    }

    /// Ground truth against what the bot saw: `+` delivered, `-` hidden.
    pub fn render_diff(&self) -> String {
        let mut out = String::new();
        for e in &self.trace {
            let mark = if e.delivered { '+' } else { '-' };
            let who = if e.from_bot { " (bot)" } else { "" };
            let _ = writeln!(out, "{mark} t={:>8} {}{who}", e.at, describe(&e.event));
        }
        for s in &self.skipped {
            let _ = writeln!(out, "! {s}");
        }
        out
    }
}

fn describe(event: &TransportEvent) -> String {
    match event {
        TransportEvent::Invited { room, members } => format!("{room} invited bot ({} members)", members.len()),
        TransportEvent::MemberJoined { room, user } => format!("{room} {user} joined"),
        TransportEvent::MemberLeft { room, user } => format!("{room} {user} left"),
        TransportEvent::BotRemoved { room } => format!("{room} bot removed"),
        TransportEvent::MessageReceived { message } => {
            format!("{} {} {}: {:?}", message.room, message.id, message.sender, message.body)
        }
        TransportEvent::ReactionReceived { room, target, user, symbol } => {
            format!("{room} {user} reacted {symbol} to {target}")
        }
        TransportEvent::MessageEdited { message } => format!(
            "{} {} edits {}: {:?}",
            message.room,
            message.id,
            message.supersedes.as_ref().map(|m| m.as_str()).unwrap_or("?"),
            message.body
        ),
        TransportEvent::MessageRedacted { room, target } => format!("{room} {target} redacted"),
    }
}

pub struct Simulator {
    bot: UserId,
    auto_invite: bool,
    steps: Vec<TimedStep>,
    cursor: usize,
    now: Timestamp,
    rooms: BTreeMap<RoomId, SimRoom>,
    pending: VecDeque<Envelope>,
    next_id: u64,
    report: SimReport,
}

impl Simulator {
    pub fn new(scenario: &Scenario) -> Self {
        let mut steps = scenario.steps.clone();
        steps.sort_by_key(|s| s.at);
        Self {
            bot: scenario.bot.clone(),
            auto_invite: scenario.auto_invite,
            steps,
            cursor: 0,
            now: 0,
            rooms: BTreeMap::new(),
            pending: VecDeque::new(),
            next_id: 0,
            report: SimReport::default(),
        }
    }

    pub fn bot(&self) -> &UserId {
        &self.bot
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn is_bot_member(&self, room: &RoomId) -> bool {
        self.rooms.get(room).is_some_and(|r| r.bot_member)
    }

    pub fn report(&self) -> &SimReport {
        &self.report
    }

    pub fn into_report(self) -> SimReport {
        self.report
    }

    fn fresh_id(&mut self, prefix: &str) -> MessageId {
        self.next_id += 1;
        MessageId::new(format!("${prefix}{}", self.next_id)).expect("non-empty")
    }

    fn emit(&mut self, event: TransportEvent, delivered: bool, from_bot: bool) {
        self.report.trace.push(TraceEntry { at: self.now, event: event.clone(), delivered, from_bot });
        if delivered {
            self.pending.push_back(Envelope { at: self.now, event });
        }
    }

    /// Emits a room event, visible only if the bot is currently a member.
    fn emit_room(&mut self, event: TransportEvent) {
        let visible = self.is_bot_member(event.room());
        self.emit(event, visible, false);
    }

    fn skip(&mut self, why: String) {
        self.report.skipped.push(format!("t={} {why}", self.now));
    }

    fn invite(&mut self, room: &RoomId) {
        let Some(r) = self.rooms.get(room) else {
            return self.skip(format!("invite into unknown room {room}"));
        };
        if r.bot_member {
            return self.skip(format!("bot already in {room}"));
        }
        let members = r.members.clone();
        self.emit(TransportEvent::Invited { room: room.clone(), members }, true, false);
    }

    fn resolve(&self, room: &RoomId, target: &Target) -> Option<MessageId> {
        let r = self.rooms.get(room)?;
        match target {
            Target::Message(id) => Some(id.clone()),
            Target::ConsentPrompt => r
                .bot_messages
                .iter()
                .rev()
                .find(|(_, k, _)| *k == OutgoingKind::ConsentPrompt)
                .map(|(id, _, _)| id.clone()),
            Target::PromptFor(msg) => r
                .bot_messages
                .iter()
                .rev()
                .find(|(_, k, reply)| *k == OutgoingKind::SuggestionPrompt && reply.as_ref() == Some(msg))
                .map(|(id, _, _)| id.clone()),
        }
    }

    fn apply(&mut self, step: Step) {
        match step {
            Step::CreateRoom { room, members } => {
                if self.rooms.contains_key(&room) {
                    return self.skip(format!("room {room} exists"));
                }
                self.rooms.insert(
                    room.clone(),
                    SimRoom { members: members.into_iter().collect(), ..Default::default() },
                );
                if self.auto_invite {
                    self.invite(&room);
                }
            }
            Step::InviteBot { room } => self.invite(&room),
            Step::RemoveBot { room } => {
                if !self.is_bot_member(&room) {
                    return self.skip(format!("bot not in {room}"));
                }
                self.emit(TransportEvent::BotRemoved { room: room.clone() }, true, false);
                self.rooms.get_mut(&room).expect("checked").bot_member = false;
            }
            Step::Join { room, user } => {
                let Some(r) = self.rooms.get_mut(&room) else {
                    return self.skip(format!("join unknown room {room}"));
                };
                r.members.insert(user.clone());
                self.emit_room(TransportEvent::MemberJoined { room, user });
            }
            Step::Leave { room, user } => {
                let Some(r) = self.rooms.get_mut(&room) else {
                    return self.skip(format!("leave unknown room {room}"));
                };
                r.members.remove(&user);
                self.emit_room(TransportEvent::MemberLeft { room, user });
            }
            Step::Send { room, user, body, id } => {
                if !self.rooms.contains_key(&room) {
                    return self.skip(format!("send into unknown room {room}"));
                }
                let id = id.unwrap_or_else(|| self.fresh_id("ev"));
                let message = Message::new(id, room, user, self.now, body);
                self.emit_room(TransportEvent::MessageReceived { message });
            }
            Step::React { room, user, target, symbol } => match self.resolve(&room, &target) {
                Some(target) => self.emit_room(TransportEvent::ReactionReceived { room, target, user, symbol }),
                None => self.skip(format!("{user} cannot react to {target} in {room}: no such message")),
            },
            Step::Edit { room, user, target, body, id } => {
                if !self.rooms.contains_key(&room) {
                    return self.skip(format!("edit in unknown room {room}"));
                }
                let id = id.unwrap_or_else(|| self.fresh_id("ev"));
                let mut message = Message::new(id, room, user, self.now, body);
                message.supersedes = Some(target);
                self.emit_room(TransportEvent::MessageEdited { message });
            }
            Step::Redact { room, target, .. } => {
                if !self.rooms.contains_key(&room) {
                    return self.skip(format!("redact in unknown room {room}"));
                }
                self.emit_room(TransportEvent::MessageRedacted { room, target });
            }
        }
    }
}

impl CommandSink for Simulator {
    fn execute(&mut self, command: TransportCommand) -> Result<Ack, TransportError> {
        self.report.commands.push((self.now, command.clone()));
        match command {
            TransportCommand::JoinRoom { room } => {
                let r = self
                    .rooms
                    .get_mut(&room)
                    .ok_or_else(|| TransportError::Terminal(format!("no room {room}")))?;
                r.bot_member = true;
                Ok(Ack::Done)
            }
            TransportCommand::LeaveRoom { room } => {
                if let Some(r) = self.rooms.get_mut(&room) {
                    r.bot_member = false;
                }
                Ok(Ack::Done)
            }
            TransportCommand::SendMessage { room, body, kind, reply_to } => {
                if !self.is_bot_member(&room) {
                    return Err(TransportError::Terminal(format!("bot is not in {room}")));
                }
                let id = self.fresh_id("bot");
                self.rooms
                    .get_mut(&room)
                    .expect("member of existing room")
                    .bot_messages
                    .push((id.clone(), kind, reply_to));
                let message = Message::new(id.clone(), room, self.bot.clone(), self.now, body);
                self.emit(TransportEvent::MessageReceived { message }, true, true);
                Ok(Ack::Sent(id))
            }
            TransportCommand::SendReaction { room, target, symbol } => {
                if !self.is_bot_member(&room) {
                    return Err(TransportError::Terminal(format!("bot is not in {room}")));
                }
                let user = self.bot.clone();
                self.emit(TransportEvent::ReactionReceived { room, target, user, symbol }, true, true);
                Ok(Ack::Done)
            }
        }
    }
}

impl Transport for Simulator {
    fn next_event(&mut self) -> Result<Option<Envelope>, TransportError> {
        loop {
            if let Some(env) = self.pending.pop_front() {
                return Ok(Some(env));
            }
            let Some(step) = self.steps.get(self.cursor).cloned() else {
                return Ok(None);
            };
            self.cursor += 1;
            self.now = self.now.max(step.at);
            self.apply(step.step);
        }
    }
}
