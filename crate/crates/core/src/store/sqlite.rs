use std::path::Path;

use rusqlite::{params, Connection, OptionalExtension, Row, Transaction};

use super::{AnnotationStore, PromptRecord, RoomReset, StoreError, StoreOp, StoreSnapshot, Tombstone};
use crate::consent::RoomSession;
use crate::model::{
    Annotation, AnnotationKind, LabelClass, Message, MessageId, RoomId, Sentence, SentenceRef, Suggestion, UserId,
};

pub const SCHEMA_VERSION: u32 = 1;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS messages (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    id TEXT NOT NULL UNIQUE,
    room TEXT NOT NULL,
    sender TEXT NOT NULL,
    sent_at INTEGER NOT NULL,
    body TEXT NOT NULL,
    supersedes TEXT,
    redacted INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX IF NOT EXISTS messages_supersedes ON messages(supersedes);
CREATE TABLE IF NOT EXISTS sentences (
    message TEXT NOT NULL,
    idx INTEGER NOT NULL,
    text TEXT NOT NULL,
    PRIMARY KEY (message, idx)
);
CREATE TABLE IF NOT EXISTS suggestions (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    message TEXT NOT NULL,
    idx INTEGER NOT NULL,
    label TEXT NOT NULL,
    score REAL NOT NULL,
    model_id TEXT NOT NULL,
    created_at INTEGER NOT NULL,
    superseded INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX IF NOT EXISTS suggestions_message ON suggestions(message);
CREATE TABLE IF NOT EXISTS annotations (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    message TEXT NOT NULL,
    idx INTEGER NOT NULL,
    label TEXT NOT NULL,
    annotator TEXT NOT NULL,
    kind TEXT NOT NULL,
    created_at INTEGER NOT NULL,
    superseded INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX IF NOT EXISTS annotations_message ON annotations(message);
CREATE TABLE IF NOT EXISTS tombstones (
    message TEXT PRIMARY KEY,
    redacted_at INTEGER NOT NULL,
    flushed INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS prompts (
    prompt TEXT PRIMARY KEY,
    message TEXT NOT NULL,
    room TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS resets (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    room TEXT NOT NULL,
    at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (room TEXT PRIMARY KEY, state TEXT NOT NULL);
";

/// Single-file store backed by SQLite in WAL mode.
///
/// Deleted pages are zeroed (`secure_delete`) so that compaction leaves no
/// trace of redacted bodies in the file.
pub struct SqliteStore {
    conn: Connection,
}

impl SqliteStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "FULL")?;
        conn.pragma_update(None, "secure_delete", "ON")?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(SCHEMA)?;
        let found: Option<String> = conn
            .query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0))
            .optional()?;
        match found {
            None => {
                conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('schema_version', ?1)",
                    [SCHEMA_VERSION.to_string()],
                )?;
            }
            Some(v) => {
                let found: u32 = v
                    .parse()
                    .map_err(|_| StoreError::Corrupt(format!("schema_version `{v}`")))?;
                if found != SCHEMA_VERSION {
                    return Err(StoreError::SchemaVersion { found, expected: SCHEMA_VERSION });
                }
            }
        }
        Ok(Self { conn })
    }

    fn apply(tx: &Transaction<'_>, op: StoreOp) -> Result<(), StoreError> {
        match op {
            StoreOp::Message { message: m, sentences } => {
                let inserted = tx.execute(
                    "INSERT OR IGNORE INTO messages (id, room, sender, sent_at, body, supersedes, redacted)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                    params![
                        m.id.as_str(),
                        m.room.as_str(),
                        m.sender.as_str(),
                        m.sent_at,
                        m.body,
                        m.supersedes.as_ref().map(|s| s.as_str()),
                        m.redacted
                    ],
                )?;
                if inserted == 0 {
                    return Err(StoreError::Duplicate(m.id));
                }
                for s in sentences {
                    tx.execute(
                        "INSERT INTO sentences (message, idx, text) VALUES (?1, ?2, ?3)",
                        params![s.message.as_str(), s.index as i64, s.text],
                    )?;
                }
            }
            StoreOp::Suggestion(s) => {
                tx.execute(
                    "INSERT INTO suggestions (message, idx, label, score, model_id, created_at, superseded)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                    params![
                        s.sentence.message.as_str(),
                        s.sentence.index as i64,
                        s.label.code(),
                        s.score,
                        s.model_id,
                        s.created_at,
                        s.superseded
                    ],
                )?;
            }
            StoreOp::Annotation(a) => {
                tx.execute(
                    "INSERT INTO annotations (message, idx, label, annotator, kind, created_at, superseded)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                    params![
                        a.sentence.message.as_str(),
                        a.sentence.index as i64,
                        a.label.code(),
                        a.annotator.as_str(),
                        kind_code(a.kind),
                        a.created_at,
                        a.superseded
                    ],
                )?;
            }
            StoreOp::SupersedeLabels(id) => {
                tx.execute("UPDATE suggestions SET superseded = 1 WHERE message = ?1", [id.as_str()])?;
                tx.execute("UPDATE annotations SET superseded = 1 WHERE message = ?1", [id.as_str()])?;
            }
            StoreOp::Redact { message, at } => {
                let id = message.as_str();
                tx.execute("UPDATE messages SET body = '', redacted = 1 WHERE id = ?1", [id])?;
                tx.execute("DELETE FROM sentences WHERE message = ?1", [id])?;
                tx.execute("DELETE FROM suggestions WHERE message = ?1", [id])?;
                tx.execute("DELETE FROM annotations WHERE message = ?1", [id])?;
                tx.execute(
                    "INSERT OR IGNORE INTO tombstones (message, redacted_at, flushed) VALUES (?1, ?2, 0)",
                    params![id, at],
                )?;
            }
            StoreOp::Prompt(p) => {
                tx.execute(
                    "INSERT OR REPLACE INTO prompts (prompt, message, room) VALUES (?1, ?2, ?3)",
                    params![p.prompt.as_str(), p.message.as_str(), p.room.as_str()],
                )?;
            }
            StoreOp::Session(s) => {
                let json = serde_json::to_string(&s).map_err(|e| StoreError::Corrupt(e.to_string()))?;
                tx.execute(
                    "INSERT OR REPLACE INTO sessions (room, state) VALUES (?1, ?2)",
                    params![s.room.as_str(), json],
                )?;
            }
            StoreOp::Reset(r) => {
                tx.execute("INSERT INTO resets (room, at) VALUES (?1, ?2)", params![r.room.as_str(), r.at])?;
            }
        }
        Ok(())
    }

    fn query<T>(
        &self,
        sql: &str,
        params: impl rusqlite::Params,
        map: impl Fn(&Row<'_>) -> Result<T, StoreError>,
    ) -> Result<Vec<T>, StoreError> {
        let mut stmt = self.conn.prepare_cached(sql)?;
        let mut rows = stmt.query(params)?;
        let mut out = Vec::new();
        while let Some(row) = rows.next()? {
            out.push(map(row)?);
        }
        Ok(out)
    }
}

fn kind_code(kind: AnnotationKind) -> &'static str {
    match kind {
        AnnotationKind::Confirmed => "confirmed",
        AnnotationKind::Corrected => "corrected",
    }
}

fn corrupt(e: impl std::fmt::Display) -> StoreError {
    StoreError::Corrupt(e.to_string())
}

fn message_id(row: &Row<'_>, i: usize) -> Result<MessageId, StoreError> {
    MessageId::new(row.get::<_, String>(i)?).map_err(corrupt)
}

fn label(row: &Row<'_>, i: usize) -> Result<LabelClass, StoreError> {
    row.get::<_, String>(i)?.parse().map_err(corrupt)
}

fn message_row(row: &Row<'_>) -> Result<Message, StoreError> {
    Ok(Message {
        id: message_id(row, 0)?,
        room: RoomId::new(row.get::<_, String>(1)?).map_err(corrupt)?,
        sender: UserId::new(row.get::<_, String>(2)?).map_err(corrupt)?,
        sent_at: row.get(3)?,
        body: row.get(4)?,
        supersedes: row
            .get::<_, Option<String>>(5)?
            .map(MessageId::new)
            .transpose()
            .map_err(corrupt)?,
        redacted: row.get(6)?,
    })
}

fn sentence_row(row: &Row<'_>) -> Result<Sentence, StoreError> {
    Ok(Sentence {
        message: message_id(row, 0)?,
        index: row.get::<_, i64>(1)? as usize,
        text: row.get(2)?,
    })
}

fn suggestion_row(row: &Row<'_>) -> Result<Suggestion, StoreError> {
    Ok(Suggestion {
        sentence: SentenceRef::new(message_id(row, 0)?, row.get::<_, i64>(1)? as usize),
        label: label(row, 2)?,
        score: row.get(3)?,
        model_id: row.get(4)?,
        created_at: row.get(5)?,
        superseded: row.get(6)?,
    })
}

fn annotation_row(row: &Row<'_>) -> Result<Annotation, StoreError> {
    let kind = match row.get::<_, String>(4)?.as_str() {
        "confirmed" => AnnotationKind::Confirmed,
        "corrected" => AnnotationKind::Corrected,
        other => return Err(corrupt(format!("annotation kind `{other}`"))),
    };
    Ok(Annotation {
        sentence: SentenceRef::new(message_id(row, 0)?, row.get::<_, i64>(1)? as usize),
        label: label(row, 2)?,
        annotator: UserId::new(row.get::<_, String>(3)?).map_err(corrupt)?,
        kind,
        created_at: row.get(5)?,
        superseded: row.get(6)?,
    })
}

const MESSAGE_COLS: &str = "id, room, sender, sent_at, body, supersedes, redacted";
const SUGGESTION_COLS: &str = "message, idx, label, score, model_id, created_at, superseded";

impl AnnotationStore for SqliteStore {
    fn commit(&mut self, ops: Vec<StoreOp>) -> Result<(), StoreError> {
        let tx = self.conn.transaction()?;
        for op in ops {
            Self::apply(&tx, op)?;
        }
        tx.commit()?;
        Ok(())
    }

    fn compact(&mut self) -> Result<(), StoreError> {
        self.conn.execute("UPDATE tombstones SET flushed = 1 WHERE flushed = 0", [])?;
        self.conn.execute_batch("VACUUM;")?;
        self.conn
            .query_row("PRAGMA wal_checkpoint(TRUNCATE)", [], |_| Ok(()))?;
        Ok(())
    }

    fn message(&self, id: &MessageId) -> Result<Option<Message>, StoreError> {
        let sql = format!("SELECT {MESSAGE_COLS} FROM messages WHERE id = ?1");
        Ok(self.query(&sql, [id.as_str()], message_row)?.pop())
    }

    fn successor(&self, id: &MessageId) -> Result<Option<MessageId>, StoreError> {
        Ok(self
            .query(
                "SELECT id FROM messages WHERE supersedes = ?1 ORDER BY seq LIMIT 1",
                [id.as_str()],
                |r| message_id(r, 0),
            )?
            .pop())
    }

    fn sentences(&self, message: &MessageId) -> Result<Vec<Sentence>, StoreError> {
        self.query(
            "SELECT message, idx, text FROM sentences WHERE message = ?1 ORDER BY idx",
            [message.as_str()],
            sentence_row,
        )
    }

    fn active_suggestions(&self, message: &MessageId) -> Result<Vec<Suggestion>, StoreError> {
        let sql = format!(
            "SELECT {SUGGESTION_COLS} FROM suggestions WHERE message = ?1 AND superseded = 0 ORDER BY seq"
        );
        self.query(&sql, [message.as_str()], suggestion_row)
    }

    fn prompt(&self, prompt: &MessageId) -> Result<Option<PromptRecord>, StoreError> {
        Ok(self
            .query(
                "SELECT prompt, message, room FROM prompts WHERE prompt = ?1",
                [prompt.as_str()],
                |r| {
                    Ok(PromptRecord {
                        prompt: message_id(r, 0)?,
                        message: message_id(r, 1)?,
                        room: RoomId::new(r.get::<_, String>(2)?).map_err(corrupt)?,
                    })
                },
            )?
            .pop())
    }

    fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        // A read transaction gives a consistent view while a writer may be active.
        let tx = self.conn.unchecked_transaction()?;
        let snap = StoreSnapshot {
            messages: self.query(&format!("SELECT {MESSAGE_COLS} FROM messages ORDER BY seq"), [], message_row)?,
            sentences: self.query(
                "SELECT message, idx, text FROM sentences ORDER BY message, idx",
                [],
                sentence_row,
            )?,
            suggestions: self.query(
                &format!("SELECT {SUGGESTION_COLS} FROM suggestions ORDER BY seq"),
                [],
                suggestion_row,
            )?,
            annotations: self.query(
                "SELECT message, idx, label, annotator, kind, created_at, superseded FROM annotations ORDER BY seq",
                [],
                annotation_row,
            )?,
            tombstones: self.query(
                "SELECT message, redacted_at, flushed FROM tombstones ORDER BY redacted_at, message",
                [],
                |r| {
                    Ok(Tombstone {
                        message: message_id(r, 0)?,
                        redacted_at: r.get(1)?,
                        flushed: r.get(2)?,
                    })
                },
            )?,
            prompts: self.query("SELECT prompt, message, room FROM prompts ORDER BY rowid", [], |r| {
                Ok(PromptRecord {
                    prompt: message_id(r, 0)?,
                    message: message_id(r, 1)?,
                    room: RoomId::new(r.get::<_, String>(2)?).map_err(corrupt)?,
                })
            })?,
            resets: self.query("SELECT room, at FROM resets ORDER BY seq", [], |r| {
                Ok(RoomReset {
                    room: RoomId::new(r.get::<_, String>(0)?).map_err(corrupt)?,
                    at: r.get(1)?,
                })
            })?,
            sessions: self.query("SELECT state FROM sessions ORDER BY room", [], |r| {
                serde_json::from_str::<RoomSession>(&r.get::<_, String>(0)?).map_err(corrupt)
            })?,
        };
        tx.finish()?;
        Ok(snap)
    }
}
