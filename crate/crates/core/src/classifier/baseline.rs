use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ClassifierError;
use crate::model::LabelClass;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Prior probability given to classes that never occur in the corpus.
const ABSENT_CLASS_PRIOR: f64 = 1e-9;

/// Multinomial naive Bayes over word 1..3-grams and character 3..5-grams,
/// with add-one smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub format_version: u32,
    pub model_id: String,
    /// Sorted feature strings.
    pub vocabulary: Vec<String>,
    /// Indexed by [`LabelClass::index`].
    pub log_priors: [f64; 4],
    /// `log_likelihoods[class][feature]`.
    pub log_likelihoods: [Vec<f64>; 4],
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Lowercased word n-grams (`w:` prefix) and character n-grams (`c:` prefix).
pub fn features(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    let mut out = Vec::new();
    for n in 1..=3 {
        for gram in words.windows(n) {
            out.push(format!("w:{}", gram.join(" ")));
        }
    }
    let padded: Vec<char> = format!(" {} ", words.join(" ")).chars().collect();
    for n in 3..=5 {
        for gram in padded.windows(n) {
            out.push(format!("c:{}", gram.iter().collect::<String>()));
        }
    }
    out
}

impl BaselineModel {
    pub fn train<S: AsRef<str>>(corpus: &[(S, LabelClass)]) -> Result<Self, ClassifierError> {
        if corpus.is_empty() {
            return Err(ClassifierError::EmptyCorpus);
        }
        let mut doc_counts = [0usize; 4];
        let mut counts: BTreeMap<String, [u64; 4]> = BTreeMap::new();
        let mut hasher = Sha256::new();
        for (text, label) in corpus {
            let c = label.index();
            doc_counts[c] += 1;
            hasher.update(label.code().as_bytes());
            hasher.update(text.as_ref().as_bytes());
            hasher.update([0u8]);
            for f in features(text.as_ref()) {
                counts.entry(f).or_default()[c] += 1;
            }
        }

        let vocabulary: Vec<String> = counts.keys().cloned().collect();
        let v = vocabulary.len() as f64;
        let n = corpus.len() as f64;
        let mut log_priors = [0.0; 4];
        let mut log_likelihoods: [Vec<f64>; 4] = Default::default();
        for class in LabelClass::ALL {
            let c = class.index();
            log_priors[c] = if doc_counts[c] == 0 {
                ABSENT_CLASS_PRIOR.ln()
            } else {
                (doc_counts[c] as f64 / n).ln()
            };
            let total: u64 = counts.values().map(|row| row[c]).sum();
            let denom = (total as f64 + v).ln();
            log_likelihoods[c] = counts
                .values()
                .map(|row| (row[c] as f64 + 1.0).ln() - denom)
                .collect();
        }

        let model_id = format!("nb-{}", &hex::encode(hasher.finalize())[..12]);
        Ok(Self::assemble(model_id, vocabulary, log_priors, log_likelihoods))
    }

    fn assemble(model_id: String, vocabulary: Vec<String>, log_priors: [f64; 4], log_likelihoods: [Vec<f64>; 4]) -> Self {
        let index = vocabulary
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            model_id,
            vocabulary,
            log_priors,
            log_likelihoods,
            index,
        }
    }

    /// A model with equal priors and no vocabulary.
    pub fn uniform() -> Self {
        Self::assemble("uniform".into(), Vec::new(), [0.25f64.ln(); 4], Default::default())
    }

    /// Unnormalized log posterior per class. Unknown features are skipped.
    pub fn log_joint(&self, text: &str) -> [f64; 4] {
        let mut scores = self.log_priors;
        for f in features(text) {
            if let Some(&i) = self.index.get(&f) {
                for (c, s) in scores.iter_mut().enumerate() {
                    *s += self.log_likelihoods[c][i];
                }
            }
        }
        scores
    }

    /// Argmax class with its normalized posterior. Exact ties go to the
    /// earlier class in P, C, S, O order.
    pub fn predict(&self, text: &str) -> Result<(LabelClass, f64), ClassifierError> {
        if text.trim().is_empty() {
            return Err(ClassifierError::EmptyText);
        }
        let scores = self.log_joint(text);
        let mut best = 0;
        for c in 1..4 {
            if scores[c] > scores[best] {
                best = c;
            }
        }
        let norm: f64 = scores.iter().map(|s| (s - scores[best]).exp()).sum();
        Ok((LabelClass::ALL[best], (1.0 / norm).clamp(0.0, 1.0)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, ClassifierError> {
        let raw: BaselineModel = serde_json::from_str(json)?;
        if raw.format_version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::ModelVersion(raw.format_version));
        }
        if raw.log_likelihoods.iter().any(|l| l.len() != raw.vocabulary.len()) {
            return Err(ClassifierError::Schema("likelihood rows do not match vocabulary".into()));
        }
        Ok(Self::assemble(raw.model_id, raw.vocabulary, raw.log_priors, raw.log_likelihoods))
    }
}
