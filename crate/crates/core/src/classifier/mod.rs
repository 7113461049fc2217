//! Label suggestions: the classifier port, a naive Bayes baseline, an HTTP
//! client for externally served models, and evaluation metrics.

mod baseline;
mod metrics;
mod remote;

pub use baseline::{BaselineModel, MODEL_FORMAT_VERSION};
pub use metrics::{evaluate, ClassMetrics, EvalReport};
pub use remote::{RemoteClassifier, RemoteConfig};

use thiserror::Error;

use crate::model::LabelClass;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("cannot classify empty text")]
    EmptyText,
    #[error("prediction and gold lists differ in length ({preds} vs {golds})")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("unsupported model format version {0}")]
    ModelVersion(u32),
    #[error("model file: {0}")]
    ModelFormat(#[from] serde_json::Error),
    #[error("remote classifier timed out")]
    Timeout,
    #[error("remote classifier returned status {0}")]
    Status(u16),
    #[error("remote classifier reply violates schema: {0}")]
    Schema(String),
    #[error("remote classifier transport: {0}")]
    Transport(String),
}

/// Anything that can propose a label for one sentence.
pub trait Classifier: Send + Sync {
    fn model_id(&self) -> &str;

    /// Returns the label and a confidence in `[0, 1]`.
    fn predict(&self, text: &str) -> Result<(LabelClass, f64), ClassifierError>;
}

impl Classifier for BaselineModel {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn predict(&self, text: &str) -> Result<(LabelClass, f64), ClassifierError> {
        BaselineModel::predict(self, text)
    }
}

/// A classifier that always fails; the pipeline then asks for a plain label.
#[derive(Debug, Clone, Default)]
pub struct Unavailable;

impl Classifier for Unavailable {
    fn model_id(&self) -> &str {
        "unavailable"
    }

    fn predict(&self, _text: &str) -> Result<(LabelClass, f64), ClassifierError> {
        Err(ClassifierError::Transport("no classifier configured".into()))
    }
}

const SEED_CORPUS: &str = include_str!("../../data/seed_corpus.tsv");

/// Reads a `label<TAB>text` corpus. Blank lines and lines starting with `#`
/// are skipped. Errors carry the 1-based line number.
pub fn parse_corpus(text: &str) -> Result<Vec<(String, LabelClass)>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, sentence) = line
            .split_once('\t')
            .ok_or_else(|| (i + 1, "expected label<TAB>text".to_string()))?;
        let label = label.parse().map_err(|e: crate::model::ModelError| (i + 1, e.to_string()))?;
        if sentence.trim().is_empty() {
            return Err((i + 1, "empty sentence".into()));
        }
        out.push((sentence.to_string(), label));
    }
    Ok(out)
}

/// The model used when no other is configured, trained on the bundled
/// seed corpus.
pub fn seed_model() -> BaselineModel {
    let corpus = parse_corpus(SEED_CORPUS).expect("bundled corpus parses");
    BaselineModel::train(&corpus).expect("bundled corpus is not empty")
}
