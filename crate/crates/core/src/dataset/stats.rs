use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::DatasetRecord;
use crate::model::LabelClass;

/// Dialogue, turn and sentence-label counts of a dataset (or one part).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dialogues: u64,
    pub turns: u64,
    pub turns_per_dialogue: f64,
    pub class_counts: BTreeMap<LabelClass, u64>,
    /// Labeled sentences; equals the sum of `class_counts`.
    pub total_sentences: u64,
    pub sents_per_dialogue_mean: f64,
    /// Population standard deviation (divides by the number of dialogues).
    pub sents_per_dialogue_sd: f64,
    /// Sentences without any label; not part of the class distribution.
    pub unlabeled_sentences: u64,
}

/// Computes the statistics over `records`, optionally restricted to one part.
///
/// Dialogues and turns count every record; the class distribution and the
/// sentences-per-dialogue figures count labeled sentences. Ratios over zero
/// dialogues are reported as 0.
pub fn stats(records: &[DatasetRecord], part: Option<&str>) -> DatasetStats {
    let selected = records
        .iter()
        .filter(|r| part.is_none() || r.part.as_deref() == part);

    let mut turns: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    let mut labeled: BTreeMap<&str, u64> = BTreeMap::new();
    let mut class_counts: BTreeMap<LabelClass, u64> = LabelClass::ALL.iter().map(|c| (*c, 0)).collect();
    let mut unlabeled = 0;
    for r in selected {
        turns.entry(&r.dialogue_id).or_default().insert(r.turn_index);
        let n = labeled.entry(&r.dialogue_id).or_default();
        match r.label {
            Some(l) => {
                *class_counts.get_mut(&l).expect("all classes present") += 1;
                *n += 1;
            }
            None => unlabeled += 1,
        }
    }

    let dialogues = turns.len() as u64;
    let total_turns: u64 = turns.values().map(|t| t.len() as u64).sum();
    let total_sentences: u64 = class_counts.values().sum();
    let (mean, sd) = if dialogues == 0 {
        (0.0, 0.0)
    } else {
        let d = dialogues as f64;
        let mean = total_sentences as f64 / d;
        let var = labeled
            .values()
            .map(|&n| (n as f64 - mean).powi(2))
            .sum::<f64>()
            / d;
        (mean, var.sqrt())
    };
    DatasetStats {
        dialogues,
        turns: total_turns,
        turns_per_dialogue: if dialogues == 0 { 0.0 } else { total_turns as f64 / dialogues as f64 },
        class_counts,
        total_sentences,
        sents_per_dialogue_mean: mean,
        sents_per_dialogue_sd: sd,
        unlabeled_sentences: unlabeled,
    }
}
