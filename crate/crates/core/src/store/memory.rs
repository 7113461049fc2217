use std::collections::HashSet;

use super::{AnnotationStore, PromptRecord, StoreError, StoreOp, StoreSnapshot, Tombstone};
use crate::model::{Message, MessageId, Sentence, Suggestion};

/// Volatile store used by the simulator, tests and the model checker.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryStore {
    data: StoreSnapshot,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_snapshot(data: StoreSnapshot) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &StoreSnapshot {
        &self.data
    }

    fn apply(&mut self, op: StoreOp) {
        let d = &mut self.data;
        match op {
            StoreOp::Message { message, sentences } => {
                d.messages.push(message);
                d.sentences.extend(sentences);
            }
            StoreOp::Suggestion(s) => d.suggestions.push(s),
            StoreOp::Annotation(a) => d.annotations.push(a),
            StoreOp::SupersedeLabels(id) => {
                for s in d.suggestions.iter_mut().filter(|s| s.sentence.message == id) {
                    s.superseded = true;
                }
                for a in d.annotations.iter_mut().filter(|a| a.sentence.message == id) {
                    a.superseded = true;
                }
            }
            StoreOp::Redact { message, at } => {
                if let Some(m) = d.messages.iter_mut().find(|m| m.id == message) {
                    m.body.clear();
                    m.redacted = true;
                }
                d.sentences.retain(|s| s.message != message);
                d.suggestions.retain(|s| s.sentence.message != message);
                d.annotations.retain(|a| a.sentence.message != message);
                if !d.tombstones.iter().any(|t| t.message == message) {
                    d.tombstones.push(Tombstone { message, redacted_at: at, flushed: false });
                }
            }
            StoreOp::Prompt(p) => d.prompts.push(p),
            StoreOp::Session(s) => match d.sessions.iter_mut().find(|x| x.room == s.room) {
                Some(existing) => *existing = s,
                None => d.sessions.push(s),
            },
            StoreOp::Reset(r) => d.resets.push(r),
        }
    }
}

impl AnnotationStore for MemoryStore {
    fn commit(&mut self, ops: Vec<StoreOp>) -> Result<(), StoreError> {
        let mut incoming = HashSet::new();
        for op in &ops {
            if let StoreOp::Message { message, .. } = op {
                if !incoming.insert(&message.id) || self.data.messages.iter().any(|m| m.id == message.id) {
                    return Err(StoreError::Duplicate(message.id.clone()));
                }
            }
        }
        for op in ops {
            self.apply(op);
        }
        Ok(())
    }

    fn compact(&mut self) -> Result<(), StoreError> {
        for t in &mut self.data.tombstones {
            t.flushed = true;
        }
        Ok(())
    }

    fn message(&self, id: &MessageId) -> Result<Option<Message>, StoreError> {
        Ok(self.data.messages.iter().find(|m| &m.id == id).cloned())
    }

    fn successor(&self, id: &MessageId) -> Result<Option<MessageId>, StoreError> {
        Ok(self
            .data
            .messages
            .iter()
            .find(|m| m.supersedes.as_ref() == Some(id))
            .map(|m| m.id.clone()))
    }

    fn sentences(&self, message: &MessageId) -> Result<Vec<Sentence>, StoreError> {
        let mut out: Vec<Sentence> = self
            .data
            .sentences
            .iter()
            .filter(|s| &s.message == message)
            .cloned()
            .collect();
        out.sort_by_key(|s| s.index);
        Ok(out)
    }

    fn active_suggestions(&self, message: &MessageId) -> Result<Vec<Suggestion>, StoreError> {
        Ok(self
            .data
            .suggestions
            .iter()
            .filter(|s| &s.sentence.message == message && !s.superseded)
            .cloned()
            .collect())
    }

    fn prompt(&self, prompt: &MessageId) -> Result<Option<PromptRecord>, StoreError> {
        Ok(self.data.prompts.iter().find(|p| &p.prompt == prompt).cloned())
    }

    fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        Ok(self.data.clone())
    }
}
