use std::collections::BTreeMap;

use super::DatasetRecord;
use crate::model::Timestamp;

/// A named slice of the dataset (`P1`, `P2`, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub name: String,
    pub records: Vec<DatasetRecord>,
}

/// Splits by collection period. `boundaries` must be ascending; a dialogue
/// goes to part `k + 1` where `k` is the number of boundaries at or before
/// its first timestamp. Every record is tagged with its part name.
///
/// Returns `boundaries.len() + 1` partitions, possibly empty.
pub fn temporal_split(records: &[DatasetRecord], boundaries: &[Timestamp]) -> Vec<Partition> {
    let mut starts: BTreeMap<&str, Timestamp> = BTreeMap::new();
    for r in records {
        starts
            .entry(&r.dialogue_id)
            .and_modify(|t| *t = (*t).min(r.timestamp))
            .or_insert(r.timestamp);
    }
    let mut parts: Vec<Partition> = (0..=boundaries.len())
        .map(|k| Partition { name: format!("P{}", k + 1), records: Vec::new() })
        .collect();
    for r in records {
        let start = starts[r.dialogue_id.as_str()];
        let k = boundaries.iter().filter(|&&b| b <= start).count();
        let mut tagged = r.clone();
        tagged.part = Some(parts[k].name.clone());
        parts[k].records.push(tagged);
    }
    parts
}

/// Groups records by their existing `part` tag; untagged records are skipped.
pub fn partition_by_part(records: &[DatasetRecord]) -> Vec<Partition> {
    let mut by: BTreeMap<String, Vec<DatasetRecord>> = BTreeMap::new();
    for r in records {
        if let Some(p) = &r.part {
            by.entry(p.clone()).or_default().push(r.clone());
        }
    }
    by.into_iter()
        .map(|(name, records)| Partition { name, records })
        .collect()
}
