//! Exported dataset: record schema, NDJSON reading/writing, anonymization,
//! statistics and temporal splits.

mod anonymize;
mod export;
mod split;
mod stats;

pub use anonymize::{anonymize, Salt, SALT_ENV};
pub use export::{export, ConflictPolicy, ExportOptions, ExportedAnnotation, SentenceIndex};
pub use split::{partition_by_part, temporal_split, Partition};
pub use stats::{stats, DatasetStats};

use std::io::{BufRead, Write};

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{LabelClass, Timestamp};
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("anonymization salt is missing or empty (set {SALT_ENV})")]
    MissingSalt,
    #[error("store has redactions that are not compacted yet; run compaction before exporting")]
    PendingRedactions,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    UserConfirmed,
    UserCorrected,
    ModelOnly,
    None,
}

/// One sentence of the exported dataset.
///
/// Field names are frozen; see `docs/dataset-schema.md`. Unknown fields
/// survive an import/export cycle through `extra`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord")]
pub struct DatasetRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    /// Ordinal of the sentence within its dialogue.
    pub sentence_index: usize,
    /// Anonymized speaker token.
    pub speaker: String,
    pub text: String,
    pub label: Option<LabelClass>,
    pub label_source: LabelSource,
    pub timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Vec<ExportedAnnotation>>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Deserialize)]
struct RawRecord {
    dialogue_id: String,
    turn_index: usize,
    sentence_index: usize,
    speaker: String,
    text: String,
    #[serde(default)]
    label: Option<LabelClass>,
    #[serde(default)]
    label_source: Option<LabelSource>,
    timestamp: Timestamp,
    #[serde(default)]
    part: Option<String>,
    #[serde(default)]
    annotations: Option<Vec<ExportedAnnotation>>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

impl TryFrom<RawRecord> for DatasetRecord {
    type Error = String;

    fn try_from(raw: RawRecord) -> Result<Self, Self::Error> {
        let label_source = match (raw.label, raw.label_source) {
            (Some(_), Some(LabelSource::None)) => {
                return Err("label present but label_source is `none`".into())
            }
            (None, Some(src)) if src != LabelSource::None => {
                return Err(format!("label_source {src:?} without a label"))
            }
            (_, Some(src)) => src,
            (Some(_), None) => {
                warn!("record without label_source in dialogue {}; assuming user-confirmed", raw.dialogue_id);
                LabelSource::UserConfirmed
            }
            (None, None) => LabelSource::None,
        };
        if raw.speaker.is_empty() {
            return Err("empty speaker".into());
        }
        Ok(DatasetRecord {
            dialogue_id: raw.dialogue_id,
            turn_index: raw.turn_index,
            sentence_index: raw.sentence_index,
            speaker: raw.speaker,
            text: raw.text,
            label: raw.label,
            label_source,
            timestamp: raw.timestamp,
            part: raw.part,
            annotations: raw.annotations,
            extra: raw.extra,
        })
    }
}

impl DatasetRecord {
    pub fn sort_key(&self) -> (&str, usize, usize) {
        (&self.dialogue_id, self.turn_index, self.sentence_index)
    }
}

/// Writes one JSON object per line.
pub fn write_ndjson<W: Write>(records: &[DatasetRecord], mut out: W) -> Result<(), DatasetError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn to_ndjson(records: &[DatasetRecord]) -> String {
    let mut buf = Vec::new();
    write_ndjson(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Reads a dataset file. Blank lines are skipped.
pub fn import<R: BufRead>(input: R) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}
