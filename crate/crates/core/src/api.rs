//! REST API for the review dashboard.
//!
//! Every GET response is computed from an export of one store snapshot, so
//! it can be reproduced from the `/export` file of the same moment. Only
//! `POST /annotations` writes; it needs `Authorization: Bearer <token>`
//! with the token from `FLOORBOT_API_TOKEN`.
//!
//! | route | response |
//! |---|---|
//! | `GET /dialogues?page=&per_page=` | dialogue summaries, 1-based pages |
//! | `GET /dialogues/{id}` | one dialogue with its sentence records |
//! | `GET /sentences?label=P` | sentence records, optionally one class |
//! | `GET /triples` | each problem with the causes and solutions after it |
//! | `GET /stats?part=` | dataset statistics and suggestion accuracy |
//! | `POST /annotations` | `{dialogue_id, sentence_index, label}` |
//! | `GET /export` | the dataset as NDJSON |

use std::collections::{BTreeMap, HashMap};
use std::future::Future;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::accounting::{self, SuggestionAccuracy};
use crate::config::DatasetSection;
use crate::dataset::{
    export, stats, temporal_split, to_ndjson, DatasetError, DatasetRecord, DatasetStats, ExportOptions, Salt,
    SentenceIndex,
};
use crate::model::{Annotation, AnnotationKind, LabelClass, Timestamp, UserId};
use crate::store::{AnnotationStore, SharedStore, StoreError, StoreOp};

pub const TOKEN_ENV: &str = "FLOORBOT_API_TOKEN";

const MAX_PER_PAGE: usize = 500;

#[derive(Clone)]
pub struct ApiState {
    pub store: SharedStore,
    pub salt: Salt,
    /// `None` disables writes.
    pub token: Option<String>,
    pub dashboard_user: UserId,
    pub dataset: DatasetSection,
    pub page_size: usize,
    /// Clock for annotation timestamps.
    pub now: fn() -> Timestamp,
}

pub fn wall_clock() -> Timestamp {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as Timestamp)
        .unwrap_or_default()
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    Unauthorized,
    NotFound(String),
    Conflict(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Unauthorized => {
                let body = Json(json!({ "error": "missing or wrong bearer token" }));
                return (StatusCode::UNAUTHORIZED, [(header::WWW_AUTHENTICATE, "Bearer")], body).into_response();
            }
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::Internal(m) => {
                log::error!("api: {m}");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal error".to_string())
            }
        };
        (status, Json(json!({ "error": message }))).into_response()
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::PendingRedactions => ApiError::Conflict(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

struct View {
    records: Vec<DatasetRecord>,
    index: SentenceIndex,
    accuracy: SuggestionAccuracy,
}

impl ApiState {
    fn options(&self) -> ExportOptions {
        ExportOptions {
            salt: self.salt.clone(),
            conflicts: self.dataset.conflicts,
            include_suggestions: self.dataset.include_suggestions,
            idle_window_ms: self.dataset.idle_window_ms(),
        }
    }

    fn view(&self) -> Result<View, ApiError> {
        let snap = self.store.snapshot()?;
        let (mut records, index) = export(&snap, &self.options())?;
        if !self.dataset.part_boundaries.is_empty() {
            records = temporal_split(&records, &self.dataset.part_boundaries)
                .into_iter()
                .flat_map(|p| p.records)
                .collect();
            records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        }
        Ok(View { records, index, accuracy: accounting::from_kinds(&snap) })
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/dialogues", get(list_dialogues))
        .route("/dialogues/{id}", get(get_dialogue))
        .route("/sentences", get(list_sentences))
        .route("/triples", get(list_triples))
        .route("/stats", get(get_stats))
        .route("/annotations", post(post_annotation))
        .route("/export", get(get_export))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: ApiState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

fn parse_count(q: &HashMap<String, String>, key: &str, default: usize) -> Result<usize, ApiError> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(ApiError::BadRequest(format!("`{key}` must be a positive integer"))),
        },
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DialogueSummary {
    pub dialogue_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<String>,
    pub start: Timestamp,
    pub end: Timestamp,
    pub turns: usize,
    pub sentences: usize,
    pub class_counts: BTreeMap<LabelClass, u64>,
}

fn group(records: &[DatasetRecord]) -> Vec<(&str, Vec<&DatasetRecord>)> {
    let mut out: Vec<(&str, Vec<&DatasetRecord>)> = Vec::new();
    for r in records {
        match out.last_mut() {
            Some((id, rs)) if *id == r.dialogue_id => rs.push(r),
            _ => out.push((&r.dialogue_id, vec![r])),
        }
    }
    out
}

fn summarize(id: &str, rs: &[&DatasetRecord]) -> DialogueSummary {
    let mut class_counts: BTreeMap<LabelClass, u64> = LabelClass::ALL.iter().map(|c| (*c, 0)).collect();
    for r in rs {
        if let Some(l) = r.label {
            *class_counts.entry(l).or_default() += 1;
        }
    }
    let mut turns: Vec<usize> = rs.iter().map(|r| r.turn_index).collect();
    turns.dedup();
    DialogueSummary {
        dialogue_id: id.to_string(),
        part: rs[0].part.clone(),
        start: rs.iter().map(|r| r.timestamp).min().unwrap_or_default(),
        end: rs.iter().map(|r| r.timestamp).max().unwrap_or_default(),
        turns: turns.len(),
        sentences: rs.len(),
        class_counts,
    }
}

async fn list_dialogues(
    State(state): State<ApiState>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let page = parse_count(&q, "page", 1)?;
    let per_page = parse_count(&q, "per_page", state.page_size)?.min(MAX_PER_PAGE);
    blocking(move || {
        let view = state.view()?;
        let groups = group(&view.records);
        let total = groups.len();
        let dialogues: Vec<DialogueSummary> = groups
            .iter()
            .skip((page - 1).saturating_mul(per_page))
            .take(per_page)
            .map(|(id, rs)| summarize(id, rs))
            .collect();
        Ok(Json(json!({ "page": page, "per_page": per_page, "total": total, "dialogues": dialogues })))
    })
    .await
}

async fn get_dialogue(State(state): State<ApiState>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    blocking(move || {
        let view = state.view()?;
        let records: Vec<&DatasetRecord> = view.records.iter().filter(|r| r.dialogue_id == id).collect();
        if records.is_empty() {
            return Err(ApiError::NotFound(format!("no dialogue {id}")));
        }
        let summary = summarize(&id, &records);
        Ok(Json(json!({ "dialogue": summary, "records": records })))
    })
    .await
}

fn parse_label(raw: &str) -> Result<LabelClass, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::BadRequest(format!("label must be one of P, C, S, O (got {raw:?})")))
}

async fn list_sentences(
    State(state): State<ApiState>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let label = q.get("label").map(|l| parse_label(l)).transpose()?;
    blocking(move || {
        let view = state.view()?;
        let sentences: Vec<&DatasetRecord> = view
            .records
            .iter()
            .filter(|r| label.is_none() || r.label == label)
            .collect();
        Ok(Json(json!({ "sentences": sentences })))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Triple {
    pub dialogue_id: String,
    pub problem: DatasetRecord,
    pub causes: Vec<DatasetRecord>,
    pub solutions: Vec<DatasetRecord>,
    /// No solution recorded yet.
    pub open: bool,
}

/// Groups each problem sentence with the cause and solution sentences that
/// follow it in the same dialogue, up to the next problem. Records must be
/// in export order.
pub fn triples(records: &[DatasetRecord]) -> Vec<Triple> {
    let mut out: Vec<Triple> = Vec::new();
    let mut current: Option<usize> = None;
    for r in records {
        if current.is_some_and(|i| out[i].dialogue_id != r.dialogue_id) {
            current = None;
        }
        match r.label {
            Some(LabelClass::Problem) => {
                out.push(Triple {
                    dialogue_id: r.dialogue_id.clone(),
                    problem: r.clone(),
                    causes: Vec::new(),
                    solutions: Vec::new(),
                    open: true,
                });
                current = Some(out.len() - 1);
            }
            Some(LabelClass::Cause) => {
                if let Some(i) = current {
                    out[i].causes.push(r.clone());
                }
            }
            Some(LabelClass::Solution) => {
                if let Some(i) = current {
                    out[i].solutions.push(r.clone());
                    out[i].open = false;
                }
            }
            _ => {}
        }
    }
    out
}

async fn list_triples(State(state): State<ApiState>) -> Result<Json<serde_json::Value>, ApiError> {
    blocking(move || {
        let view = state.view()?;
        Ok(Json(json!({ "triples": triples(&view.records) })))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct StatsResponse {
    #[serde(flatten)]
    pub stats: DatasetStats,
    pub suggestion_accuracy: AccuracyView,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct AccuracyView {
    pub confirmed: u64,
    pub corrected: u64,
    pub ratio: Option<f64>,
}

async fn get_stats(
    State(state): State<ApiState>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<StatsResponse>, ApiError> {
    let part = q.get("part").cloned().filter(|p| !p.is_empty());
    blocking(move || {
        let view = state.view()?;
        Ok(Json(StatsResponse {
            stats: stats(&view.records, part.as_deref()),
            suggestion_accuracy: AccuracyView {
                confirmed: view.accuracy.confirmed,
                corrected: view.accuracy.corrected,
                ratio: view.accuracy.ratio(),
            },
        }))
    })
    .await
}

fn authorized(headers: &HeaderMap, token: Option<&str>) -> bool {
    let Some(expected) = token else { return false };
    let Some(given) = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
    else {
        return false;
    };
    // Compare without an early exit on the first differing byte.
    given.len() == expected.len()
        && given.bytes().zip(expected.bytes()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewAnnotation {
    dialogue_id: String,
    sentence_index: usize,
    label: String,
}

async fn post_annotation(
    State(state): State<ApiState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<DatasetRecord>), ApiError> {
    if !authorized(&headers, state.token.as_deref()) {
        return Err(ApiError::Unauthorized);
    }
    let req: NewAnnotation =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("invalid body: {e}")))?;
    let label = parse_label(&req.label)?;
    blocking(move || {
        let view = state.view()?;
        let key = (req.dialogue_id.clone(), req.sentence_index);
        let sentence = view
            .index
            .get(&key)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no sentence {} in dialogue {}", key.1, key.0)))?;
        let mut store = state.store.clone();
        let suggested = store
            .active_suggestions(&sentence.message)?
            .into_iter()
            .find(|s| s.sentence == sentence)
            .map(|s| s.label);
        let kind = if suggested == Some(label) { AnnotationKind::Confirmed } else { AnnotationKind::Corrected };
        store.commit(vec![StoreOp::Annotation(Annotation {
            sentence,
            label,
            annotator: state.dashboard_user.clone(),
            kind,
            created_at: (state.now)(),
            superseded: false,
        })])?;
        let view = state.view()?;
        let record = view
            .records
            .into_iter()
            .find(|r| r.dialogue_id == key.0 && r.sentence_index == key.1)
            .ok_or_else(|| ApiError::Internal("annotated sentence vanished".into()))?;
        Ok((StatusCode::CREATED, Json(record)))
    })
    .await
}

async fn get_export(State(state): State<ApiState>) -> Result<Response, ApiError> {
    blocking(move || {
        let view = state.view()?;
        Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], to_ndjson(&view.records)).into_response())
    })
    .await
}
