use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::model::LabelClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Unweighted mean of the four per-class F1 scores.
    pub macro_f1: f64,
    pub per_class: BTreeMap<LabelClass, ClassMetrics>,
    /// `confusion[gold][pred]`.
    pub confusion: [[u64; 4]; 4],
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, per-class precision/recall/F1 and macro-F1.
///
/// Undefined ratios (0/0) count as 0, and classes without support still
/// enter the macro average with F1 = 0.
pub fn evaluate(preds: &[LabelClass], golds: &[LabelClass]) -> Result<EvalReport, ClassifierError> {
    if preds.len() != golds.len() {
        return Err(ClassifierError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    if preds.is_empty() {
        return Err(ClassifierError::EmptyEvaluation);
    }
    let mut confusion = [[0u64; 4]; 4];
    for (p, g) in preds.iter().zip(golds) {
        confusion[g.index()][p.index()] += 1;
    }
    let correct: u64 = (0..4).map(|c| confusion[c][c]).sum();

    let mut per_class = BTreeMap::new();
    for class in LabelClass::ALL {
        let c = class.index();
        let tp = confusion[c][c];
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = (0..4).map(|g| confusion[g][c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.insert(class, ClassMetrics { precision, recall, f1, support });
    }
    let macro_f1 = per_class.values().map(|m| m.f1).sum::<f64>() / 4.0;

    Ok(EvalReport {
        accuracy: ratio(correct, preds.len() as u64),
        macro_f1,
        per_class,
        confusion,
    })
}
