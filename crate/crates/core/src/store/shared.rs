use std::sync::{Arc, Mutex, MutexGuard};

use super::{AnnotationStore, PromptRecord, StoreError, StoreOp, StoreSnapshot};
use crate::model::{Message, MessageId, Sentence, Suggestion};

type Inner = Box<dyn AnnotationStore + Send>;

/// A store shared between the bot and the API. Calls are serialized, so
/// there is a single writer at any time.
///
/// [`SharedStore::close`] drops the underlying store; later calls fail with
/// [`StoreError::Closed`].
#[derive(Clone)]
pub struct SharedStore(Arc<Mutex<Option<Inner>>>);

impl SharedStore {
    pub fn new(store: impl AnnotationStore + Send + 'static) -> Self {
        Self(Arc::new(Mutex::new(Some(Box::new(store)))))
    }

    fn lock(&self) -> MutexGuard<'_, Option<Inner>> {
        // A panic while holding the lock cannot leave a half-applied commit
        // behind (commits are transactional), so poisoning is ignored.
        self.0.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn with<T>(&self, f: impl FnOnce(&mut Inner) -> Result<T, StoreError>) -> Result<T, StoreError> {
        match self.lock().as_mut() {
            Some(s) => f(s),
            None => Err(StoreError::Closed),
        }
    }

    /// Waits for the current call to finish, then closes the store.
    pub fn close(&self) {
        self.lock().take();
    }
}

impl AnnotationStore for SharedStore {
    fn commit(&mut self, ops: Vec<StoreOp>) -> Result<(), StoreError> {
        self.with(|s| s.commit(ops))
    }
    fn compact(&mut self) -> Result<(), StoreError> {
        self.with(|s| s.compact())
    }
    fn message(&self, id: &MessageId) -> Result<Option<Message>, StoreError> {
        self.with(|s| s.message(id))
    }
    fn successor(&self, id: &MessageId) -> Result<Option<MessageId>, StoreError> {
        self.with(|s| s.successor(id))
    }
    fn sentences(&self, message: &MessageId) -> Result<Vec<Sentence>, StoreError> {
        self.with(|s| s.sentences(message))
    }
    fn active_suggestions(&self, message: &MessageId) -> Result<Vec<Suggestion>, StoreError> {
        self.with(|s| s.active_suggestions(message))
    }
    fn prompt(&self, prompt: &MessageId) -> Result<Option<PromptRecord>, StoreError> {
        self.with(|s| s.prompt(prompt))
    }
    fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        self.with(|s| s.snapshot())
    }
}
