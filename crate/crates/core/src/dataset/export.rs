use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{anonymize, DatasetError, DatasetRecord, LabelSource, Salt};
use crate::model::{
    split_dialogues, Annotation, AnnotationKind, DialogueBoundaries, Message, MessageId, RoomId, SentenceRef,
    Timestamp, DEFAULT_IDLE_WINDOW_MS,
};
use crate::store::StoreSnapshot;

/// What to do when several people labeled the same sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictPolicy {
    /// The most recent annotation decides the label.
    #[default]
    LastWins,
    /// As `LastWins`, and every annotation is listed in `annotations`.
    All,
}

impl std::str::FromStr for ConflictPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "last-wins" => Ok(Self::LastWins),
            "all" => Ok(Self::All),
            _ => Err(format!("unknown conflict policy `{s}` (expected last-wins or all)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedAnnotation {
    pub annotator: String,
    pub label: crate::model::LabelClass,
    pub label_source: LabelSource,
}

#[derive(Debug, Clone)]
pub struct ExportOptions {
    pub salt: Salt,
    pub conflicts: ConflictPolicy,
    /// Emit unreviewed model suggestions as `model-only` labels.
    pub include_suggestions: bool,
    pub idle_window_ms: i64,
}

impl ExportOptions {
    pub fn new(salt: Salt) -> Self {
        Self {
            salt,
            conflicts: ConflictPolicy::LastWins,
            include_suggestions: false,
            idle_window_ms: DEFAULT_IDLE_WINDOW_MS,
        }
    }
}

/// Maps exported `(dialogue_id, sentence_index)` back to stored sentences.
pub type SentenceIndex = HashMap<(String, usize), SentenceRef>;

fn source_of(kind: AnnotationKind) -> LabelSource {
    match kind {
        AnnotationKind::Confirmed => LabelSource::UserConfirmed,
        AnnotationKind::Corrected => LabelSource::UserCorrected,
    }
}

/// Builds the dataset: one record per sentence of every current,
/// unredacted message, sorted by dialogue, turn and sentence.
pub fn export(snap: &StoreSnapshot, opts: &ExportOptions) -> Result<(Vec<DatasetRecord>, SentenceIndex), DatasetError> {
    if snap.has_unflushed_redactions() {
        return Err(DatasetError::PendingRedactions);
    }

    let by_id: HashMap<&MessageId, &Message> = snap.messages.iter().map(|m| (&m.id, m)).collect();
    let superseded: std::collections::HashSet<&MessageId> =
        snap.messages.iter().filter_map(|m| m.supersedes.as_ref()).collect();

    // Edits keep the position of the message they replace.
    let root_time = |m: &Message| -> Timestamp {
        let mut t = m.sent_at;
        let mut cur = m;
        while let Some(prev) = cur.supersedes.as_ref().and_then(|p| by_id.get(p)) {
            t = prev.sent_at;
            cur = prev;
        }
        t
    };

    let mut per_room: BTreeMap<&RoomId, Vec<Message>> = BTreeMap::new();
    for m in &snap.messages {
        if m.redacted || superseded.contains(&m.id) {
            continue;
        }
        let mut placed = m.clone();
        placed.sent_at = root_time(m);
        per_room.entry(&m.room).or_default().push(placed);
    }

    let mut sentences: HashMap<&MessageId, Vec<&crate::model::Sentence>> = HashMap::new();
    for s in &snap.sentences {
        sentences.entry(&s.message).or_default().push(s);
    }
    for list in sentences.values_mut() {
        list.sort_by_key(|s| s.index);
    }
    let mut annotations: HashMap<SentenceRef, Vec<&Annotation>> = HashMap::new();
    for a in snap.annotations.iter().filter(|a| !a.superseded) {
        annotations.entry(a.sentence.clone()).or_default().push(a);
    }
    let mut suggestions = HashMap::new();
    for s in snap.suggestions.iter().filter(|s| !s.superseded) {
        suggestions.insert(s.sentence.clone(), s);
    }

    let mut records = Vec::new();
    let mut index = SentenceIndex::new();
    for (room, msgs) in &per_room {
        let resets: Vec<Timestamp> = snap
            .resets
            .iter()
            .filter(|r| &r.room == *room)
            .map(|r| r.at)
            .collect();
        let refs: Vec<&Message> = msgs.iter().collect();
        let lookup: HashMap<&MessageId, &Message> = msgs.iter().map(|m| (&m.id, m)).collect();
        let bounds = DialogueBoundaries { idle_window_ms: opts.idle_window_ms, resets: &resets };
        for dialogue in split_dialogues(room, &refs, bounds) {
            let mut turn = 0usize;
            let mut prev_sender = None;
            let mut sentence_index = 0usize;
            for id in &dialogue.messages {
                let msg = lookup[id];
                if let Some(prev) = prev_sender {
                    if prev != &msg.sender {
                        turn += 1;
                    }
                }
                prev_sender = Some(&msg.sender);
                let speaker = anonymize(&msg.sender, &opts.salt);
                for s in sentences.get(id).map(Vec::as_slice).unwrap_or_default() {
                    let sref = s.sentence_ref();
                    let given = annotations.get(&sref).map(Vec::as_slice).unwrap_or_default();
                    let (label, label_source) = match given.last() {
                        Some(a) => (Some(a.label), source_of(a.kind)),
                        None => match suggestions.get(&sref) {
                            Some(sg) if opts.include_suggestions => (Some(sg.label), LabelSource::ModelOnly),
                            _ => (None, LabelSource::None),
                        },
                    };
                    let listed = (opts.conflicts == ConflictPolicy::All && !given.is_empty()).then(|| {
                        given
                            .iter()
                            .map(|a| ExportedAnnotation {
                                annotator: anonymize(&a.annotator, &opts.salt),
                                label: a.label,
                                label_source: source_of(a.kind),
                            })
                            .collect()
                    });
                    index.insert((dialogue.id.clone(), sentence_index), sref);
                    records.push(DatasetRecord {
                        dialogue_id: dialogue.id.clone(),
                        turn_index: turn,
                        sentence_index,
                        speaker: speaker.clone(),
                        text: s.text.clone(),
                        label,
                        label_source,
                        timestamp: msg.sent_at,
                        part: None,
                        annotations: listed,
                        extra: Default::default(),
                    });
                    sentence_index += 1;
                }
            }
        }
    }
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok((records, index))
}
