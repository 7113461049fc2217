//! The bot: routes transport events through the consent machine and the
//! annotation pipeline, and writes the results to the store.
//!
//! Nothing is persisted for a room unless its session is `Recording` when
//! the event arrives. Annotations are created only from reactions on
//! suggestion prompts, one per valid reaction.

pub mod reactions;
pub mod templates;

use std::collections::BTreeSet;
use std::sync::Arc;

use log::{info, warn};
use thiserror::Error;

pub use reactions::{ReactionAlphabet, ReactionIntent};
pub use templates::Templates;

use crate::classifier::Classifier;
use crate::consent::{ConsentConfig, ConsentEffect, ConsentEngine, ConsentState, Transition, Vote};
use crate::model::{Annotation, AnnotationKind, LabelClass, Message, MessageId, RoomId, Sentence, Suggestion, Timestamp, UserId};
use crate::segment::segment;
use crate::store::{AnnotationStore, PromptRecord, RoomReset, StoreError, StoreOp};
use crate::transport::{Ack, CommandSink, Envelope, OutgoingKind, TransportCommand, TransportError, TransportEvent};

#[derive(Debug, Error)]
pub enum BotError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone)]
pub struct BotConfig {
    pub user: UserId,
    pub consent: ConsentConfig,
    pub reactions: ReactionAlphabet,
    pub templates: Templates,
    /// Purge erased content right after each redaction.
    pub compact_on_redaction: bool,
}

impl BotConfig {
    pub fn new(user: UserId) -> Self {
        Self {
            user,
            consent: ConsentConfig::default(),
            reactions: ReactionAlphabet::default(),
            templates: Templates::default(),
            compact_on_redaction: true,
        }
    }
}

#[derive(Clone)]
pub struct Bot<S> {
    config: BotConfig,
    engine: ConsentEngine,
    store: S,
    classifier: Arc<dyn Classifier>,
}

impl<S: AnnotationStore> Bot<S> {
    /// Restores room sessions saved in `store`.
    pub fn new(config: BotConfig, store: S, classifier: Arc<dyn Classifier>) -> Result<Self, BotError> {
        let sessions = store.snapshot()?.sessions;
        let engine = ConsentEngine::restore(config.consent, sessions);
        Ok(Self { config, engine, store, classifier })
    }

    pub fn config(&self) -> &BotConfig {
        &self.config
    }

    pub fn engine(&self) -> &ConsentEngine {
        &self.engine
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut S {
        &mut self.store
    }

    pub fn into_store(self) -> S {
        self.store
    }

    pub fn state(&self, room: &RoomId) -> Option<ConsentState> {
        self.engine.state(room)
    }

    pub fn handle(&mut self, envelope: &Envelope, sink: &mut dyn CommandSink) -> Result<(), BotError> {
        let at = envelope.at;
        let bot = self.config.user.clone();
        match &envelope.event {
            TransportEvent::Invited { room, members } => {
                let others: BTreeSet<UserId> = members.iter().filter(|m| **m != bot).cloned().collect();
                let t = self.engine.on_invite(room, others, at);
                self.apply(room, t, at, sink)?;
            }
            TransportEvent::MemberJoined { room, user } if *user != bot => {
                let config = self.engine.config;
                if let Some(s) = self.engine.session_mut(room) {
                    let t = s.on_member_joined(&config, user.clone(), at);
                    self.apply(room, t, at, sink)?;
                }
            }
            TransportEvent::MemberLeft { room, user } if *user != bot => {
                let config = self.engine.config;
                if let Some(s) = self.engine.session_mut(room) {
                    let t = s.on_member_left(&config, user, at);
                    self.apply(room, t, at, sink)?;
                }
            }
            TransportEvent::MemberJoined { .. } | TransportEvent::MemberLeft { .. } => {}
            TransportEvent::BotRemoved { room } => {
                if let Some(s) = self.engine.session_mut(room) {
                    let t = s.on_bot_removed(at);
                    self.apply(room, t, at, sink)?;
                }
            }
            TransportEvent::MessageReceived { message } | TransportEvent::MessageEdited { message } => {
                if message.sender == bot {
                    return Ok(());
                }
                match self.engine.state(&message.room) {
                    Some(ConsentState::AwaitingConsent) => {
                        let s = self.engine.session_mut(&message.room).expect("state exists");
                        let t = s.on_message_while_awaiting(&bot, &message.sender, at);
                        self.apply(&message.room, t, at, sink)?;
                    }
                    Some(ConsentState::Recording) if message.supersedes.is_some() => {
                        self.on_edit(message.clone(), at, sink)?;
                    }
                    Some(ConsentState::Recording) => self.process_message(message.clone(), at, sink)?,
                    _ => {}
                }
            }
            TransportEvent::ReactionReceived { room, target, user, symbol } => {
                if *user == bot {
                    return Ok(());
                }
                self.on_reaction(room, target, user, symbol, at, sink)?;
            }
            TransportEvent::MessageRedacted { room, target } => self.on_redaction(room, target, at)?,
        }
        Ok(())
    }

    fn send(&mut self, sink: &mut dyn CommandSink, command: TransportCommand) -> Result<Ack, TransportError> {
        let mut attempt = 0;
        loop {
            match sink.execute(command.clone()) {
                Err(TransportError::Retriable(e)) if attempt < 2 => {
                    warn!("retrying command after transient failure: {e}");
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// Carries out the effects of a consent transition and saves the
    /// session, which may have changed (members, votes) even without one.
    fn apply(&mut self, room: &RoomId, t: Transition, at: Timestamp, sink: &mut dyn CommandSink) -> Result<(), BotError> {
        let alphabet = self.config.reactions.clone();
        let mut ops = Vec::new();
        for effect in &t.effects {
            match effect {
                ConsentEffect::JoinRoom => {
                    self.send(sink, TransportCommand::JoinRoom { room: room.clone() })?;
                }
                ConsentEffect::SendPrompt => {
                    let body = self.config.templates.consent_prompt(&alphabet);
                    let ack = self.send(
                        sink,
                        TransportCommand::SendMessage { room: room.clone(), body, kind: OutgoingKind::ConsentPrompt, reply_to: None },
                    )?;
                    if let Ack::Sent(id) = ack {
                        if let Some(s) = self.engine.session_mut(room) {
                            s.prompt = Some(id.clone());
                        }
                        for symbol in [&alphabet.accept, &alphabet.reject] {
                            let cmd = TransportCommand::SendReaction { room: room.clone(), target: id.clone(), symbol: symbol.clone() };
                            if let Err(e) = self.send(sink, cmd) {
                                warn!("could not pre-react on consent prompt in {room}: {e}");
                            }
                        }
                    }
                }
                ConsentEffect::SendNotification => {
                    let body = self.config.templates.notification(&alphabet);
                    self.send(
                        sink,
                        TransportCommand::SendMessage { room: room.clone(), body, kind: OutgoingKind::Notification, reply_to: None },
                    )?;
                }
                ConsentEffect::LeaveRoom => {
                    self.send(sink, TransportCommand::LeaveRoom { room: room.clone() })?;
                }
            }
        }
        if t.to == ConsentState::Recording && t.from != ConsentState::Recording {
            ops.push(StoreOp::Reset(RoomReset { room: room.clone(), at }));
        }
        if let Some(s) = self.engine.session(room) {
            ops.push(StoreOp::Session(s.clone()));
        }
        self.store.commit(ops)?;
        Ok(())
    }

    fn is_recording(&self, room: &RoomId) -> bool {
        self.engine.state(room) == Some(ConsentState::Recording)
    }

    /// Segments, stores and classifies a message, then asks for labels.
    fn process_message(&mut self, message: Message, at: Timestamp, sink: &mut dyn CommandSink) -> Result<(), BotError> {
        self.record(message, Vec::new(), at, sink)
    }

    /// Shared tail of new messages and edits. `pre` ops are committed in the
    /// same transaction as the message.
    fn record(&mut self, message: Message, pre: Vec<StoreOp>, at: Timestamp, sink: &mut dyn CommandSink) -> Result<(), BotError> {
        if self.store.message(&message.id)?.is_some() {
            info!("message {} already stored, skipping", message.id);
            return Ok(());
        }
        let sentences: Vec<Sentence> = segment(&message.body)
            .into_iter()
            .enumerate()
            .map(|(index, text)| Sentence { message: message.id.clone(), index, text })
            .collect();
        if sentences.is_empty() {
            info!("message {} has no text, not recording it", message.id);
            return Ok(());
        }
        let suggestions = self.suggest(&sentences, at);
        let mut ops = pre;
        ops.push(StoreOp::Message { message: message.clone(), sentences: sentences.clone() });
        if let Some(list) = &suggestions {
            ops.extend(list.iter().cloned().map(StoreOp::Suggestion));
        }
        self.store.commit(ops)?;

        let labels: Option<Vec<LabelClass>> = suggestions.map(|l| l.iter().map(|s| s.label).collect());
        let body = self
            .config
            .templates
            .suggestion_prompt(&self.config.reactions, &sentences, labels.as_deref());
        let ack = self.send(
            sink,
            TransportCommand::SendMessage {
                room: message.room.clone(),
                body,
                kind: OutgoingKind::SuggestionPrompt,
                reply_to: Some(message.id.clone()),
            },
        )?;
        if let Ack::Sent(prompt) = ack {
            self.store.commit(vec![StoreOp::Prompt(PromptRecord { prompt, message: message.id, room: message.room })])?;
        }
        Ok(())
    }

    /// One suggestion per sentence, or `None` if the classifier failed on
    /// any of them.
    fn suggest(&self, sentences: &[Sentence], at: Timestamp) -> Option<Vec<Suggestion>> {
        let mut out = Vec::with_capacity(sentences.len());
        for s in sentences {
            match self.classifier.predict(&s.text) {
                Ok((label, score)) => out.push(Suggestion {
                    sentence: s.sentence_ref(),
                    label,
                    score,
                    model_id: self.classifier.model_id().to_string(),
                    created_at: at,
                    superseded: false,
                }),
                Err(e) => {
                    warn!("classifier unavailable, sending plain label request: {e}");
                    return None;
                }
            }
        }
        Some(out)
    }

    fn on_edit(&mut self, mut edit: Message, at: Timestamp, sink: &mut dyn CommandSink) -> Result<(), BotError> {
        let original = edit.supersedes.clone().expect("edits name their original");
        let Some(orig) = self.store.message(&original)? else {
            info!("edit {} of unrecorded message {original}, ignoring", edit.id);
            return Ok(());
        };
        if orig.redacted || orig.room != edit.room {
            info!("edit {} targets a redacted or foreign message, ignoring", edit.id);
            return Ok(());
        }
        // Edits may name the first version; attach them to the newest one.
        let head = self.store.chain_head(&original)?;
        edit.supersedes = Some(head.clone());
        self.record(edit, vec![StoreOp::SupersedeLabels(head)], at, sink)
    }

    fn on_reaction(
        &mut self,
        room: &RoomId,
        target: &MessageId,
        user: &UserId,
        symbol: &str,
        at: Timestamp,
        sink: &mut dyn CommandSink,
    ) -> Result<(), BotError> {
        let alphabet = &self.config.reactions;
        if self.engine.state(room) == Some(ConsentState::AwaitingConsent) {
            let session = self.engine.session(room).expect("state exists");
            if session.prompt.as_ref() != Some(target) {
                return Ok(());
            }
            let vote = if symbol == alphabet.accept {
                Vote::Accept
            } else if symbol == alphabet.reject {
                Vote::Reject
            } else {
                return Ok(());
            };
            let config = self.engine.config;
            let t = self
                .engine
                .session_mut(room)
                .expect("state exists")
                .on_consent_reaction(&config, user, vote, at);
            return self.apply(room, t, at, sink);
        }
        if !self.is_recording(room) {
            return Ok(());
        }
        let Some(prompt) = self.store.prompt(target)? else {
            return Ok(());
        };
        let Some(message) = self.store.message(&prompt.message)? else {
            return Ok(());
        };
        if message.redacted || self.store.successor(&message.id)?.is_some() {
            info!("reaction on prompt for redacted or edited message {}, ignoring", message.id);
            return Ok(());
        }
        let sentences = self.store.sentences(&message.id)?;
        let Some((index, intent)) = alphabet.parse(symbol, sentences.len()) else {
            info!("reaction {symbol:?} by {user} does not address a sentence, ignoring");
            return Ok(());
        };
        let suggested = self
            .store
            .active_suggestions(&message.id)?
            .into_iter()
            .find(|s| s.sentence.index == index)
            .map(|s| s.label);
        let label = match (intent, suggested) {
            (ReactionIntent::Confirm, Some(l)) | (ReactionIntent::Label(l), _) => l,
            (ReactionIntent::Confirm, None) => {
                info!("confirm without a suggestion on {}, ignoring", message.id);
                return Ok(());
            }
        };
        let kind = if Some(label) == suggested { AnnotationKind::Confirmed } else { AnnotationKind::Corrected };
        let annotation = Annotation {
            sentence: sentences[index].sentence_ref(),
            label,
            annotator: user.clone(),
            kind,
            created_at: at,
            superseded: false,
        };
        self.store.commit(vec![StoreOp::Annotation(annotation)])?;
        Ok(())
    }

    /// Erases every version of the message. Works in any consent state so
    /// that data recorded earlier can still be withdrawn.
    fn on_redaction(&mut self, room: &RoomId, target: &MessageId, at: Timestamp) -> Result<(), BotError> {
        match self.store.message(target)? {
            Some(m) if m.room == *room && !m.redacted => {}
            _ => {
                info!("redaction of unknown message {target} in {room}, nothing stored");
                return Ok(());
            }
        }
        let ops = self
            .store
            .chain(target)?
            .into_iter()
            .map(|message| StoreOp::Redact { message, at })
            .collect();
        self.store.commit(ops)?;
        if self.config.compact_on_redaction {
            self.store.compact()?;
        }
        Ok(())
    }
}
