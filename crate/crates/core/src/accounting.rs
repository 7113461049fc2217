//! How often members accepted the suggested label.
//!
//! Prompts nobody reacted to are left out: they say nothing about whether
//! the suggestion was right.

use std::collections::HashMap;

use serde::Serialize;

use crate::model::{AnnotationKind, LabelClass, SentenceRef};
use crate::store::StoreSnapshot;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SuggestionAccuracy {
    pub confirmed: u64,
    pub corrected: u64,
}

impl SuggestionAccuracy {
    /// `confirmed / (confirmed + corrected)`, or `None` before any reaction.
    pub fn ratio(&self) -> Option<f64> {
        let total = self.confirmed + self.corrected;
        (total > 0).then(|| self.confirmed as f64 / total as f64)
    }
}

/// Counts annotation kinds as recorded.
pub fn from_kinds(snap: &StoreSnapshot) -> SuggestionAccuracy {
    let mut acc = SuggestionAccuracy::default();
    for a in &snap.annotations {
        match a.kind {
            AnnotationKind::Confirmed => acc.confirmed += 1,
            AnnotationKind::Corrected => acc.corrected += 1,
        }
    }
    acc
}

/// Recounts from the rows themselves: an annotation agrees with the model
/// when its label equals the suggestion stored for the same sentence.
/// Sentences without a suggestion count as corrected.
pub fn recompute(snap: &StoreSnapshot) -> SuggestionAccuracy {
    let suggested: HashMap<&SentenceRef, LabelClass> =
        snap.suggestions.iter().map(|s| (&s.sentence, s.label)).collect();
    let mut acc = SuggestionAccuracy::default();
    for a in &snap.annotations {
        if suggested.get(&a.sentence) == Some(&a.label) {
            acc.confirmed += 1;
        } else {
            acc.corrected += 1;
        }
    }
    acc
}
