use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use floorbot::api::{router, ApiState};
use floorbot::bot::{Bot, BotConfig};
use floorbot::classifier::seed_model;
use floorbot::config::DatasetSection;
use floorbot::dataset::{export, import, ExportOptions, Salt};
use floorbot::model::{MessageId, RoomId, UserId};
use floorbot::simulate::run_scenario;
use floorbot::store::{AnnotationStore, MemoryStore, SharedStore};
use floorbot::transport::{Scenario, Step, Target};

const TOKEN: &str = "s3cret";

fn uid(s: &str) -> UserId {
    UserId::new(s).unwrap()
}

fn mid(s: &str) -> MessageId {
    MessageId::new(s).unwrap()
}

/// Two rooms: a problem/cause/solution exchange with reactions, and a
/// second room where nothing was labeled.
fn fixture() -> SharedStore {
    let mut sc = Scenario::parse(include_str!("../scenarios/happy_path.toml")).unwrap();
    let r = RoomId::new("!canteen:sim").unwrap();
    sc.push(200_000, Step::CreateRoom { room: r.clone(), members: vec![uid("@carol:sim")] });
    sc.push(201_000, Step::React { room: r.clone(), user: uid("@carol:sim"), target: Target::ConsentPrompt, symbol: "✅".into() });
    sc.push(202_000, Step::Send { room: r.clone(), user: uid("@carol:sim"), body: "Wer hat heute Spätschicht? Ich frage den Meister.".into(), id: Some(mid("$c1")) });
    let store = SharedStore::new(MemoryStore::new());
    let mut bot = Bot::new(BotConfig::new(sc.bot.clone()), store.clone(), Arc::new(seed_model())).unwrap();
    run_scenario(&sc, &mut bot).unwrap();
    store
}

fn state(store: SharedStore) -> ApiState {
    ApiState {
        store,
        salt: Salt::new("api-test").unwrap(),
        token: Some(TOKEN.into()),
        dashboard_user: uid("@curator:sim"),
        dataset: DatasetSection::default(),
        page_size: 50,
        now: || 1_000_000,
    }
}

async fn call(state: &ApiState, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

async fn get(state: &ApiState, uri: &str) -> (StatusCode, Value) {
    let (status, body) = call(state, Request::get(uri).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

async fn post(state: &ApiState, token: Option<&str>, body: &str) -> (StatusCode, Value) {
    let mut req = Request::post("/annotations").header(header::CONTENT_TYPE, "application/json");
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let (status, body) = call(state, req.body(Body::from(body.to_string())).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

#[tokio::test]
async fn dialogues_are_paged() {
    let s = state(fixture());
    let (status, page1) = get(&s, "/dialogues?per_page=1").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page1["total"], 2);
    assert_eq!(page1["dialogues"].as_array().unwrap().len(), 1);
    let (_, page2) = get(&s, "/dialogues?per_page=1&page=2").await;
    assert_ne!(page1["dialogues"][0]["dialogue_id"], page2["dialogues"][0]["dialogue_id"]);
    let (_, page3) = get(&s, "/dialogues?per_page=1&page=3").await;
    assert!(page3["dialogues"].as_array().unwrap().is_empty());
    assert_eq!(get(&s, "/dialogues?page=0").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&s, "/dialogues?per_page=x").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn single_dialogue_and_unknown_id() {
    let s = state(fixture());
    let (_, list) = get(&s, "/dialogues").await;
    let id = list["dialogues"][0]["dialogue_id"].as_str().unwrap().to_string();
    let (status, d) = get(&s, &format!("/dialogues/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(d["records"].as_array().unwrap().len(), 3);
    assert_eq!(d["dialogue"]["turns"], 3);
    assert_eq!(get(&s, "/dialogues/d-nope").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sentences_filter_by_label() {
    let s = state(fixture());
    let (_, all) = get(&s, "/sentences").await;
    assert_eq!(all["sentences"].as_array().unwrap().len(), 5);
    let (_, causes) = get(&s, "/sentences?label=C").await;
    let causes = causes["sentences"].as_array().unwrap();
    assert_eq!(causes.len(), 1);
    assert_eq!(causes[0]["text"], "Der Sensor ist verschmutzt.");
    assert_eq!(get(&s, "/sentences?label=X").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn labeled_exchange_forms_one_triple() {
    let s = state(fixture());
    let (_, body) = get(&s, "/triples").await;
    let triples = body["triples"].as_array().unwrap();
    assert_eq!(triples.len(), 1);
    let t = &triples[0];
    assert_eq!(t["problem"]["label"], "P");
    assert_eq!(t["causes"][0]["label"], "C");
    assert_eq!(t["solutions"][0]["label"], "S");
    assert_eq!(t["open"], false);
}

#[tokio::test]
async fn stats_include_accuracy_and_filter_parts() {
    let mut s = state(fixture());
    let (_, body) = get(&s, "/stats").await;
    assert_eq!(body["dialogues"], 2);
    assert_eq!(body["total_sentences"], 3);
    assert_eq!(body["unlabeled_sentences"], 2);
    assert_eq!(body["class_counts"], json!({"P": 1, "C": 1, "S": 1, "O": 0}));
    assert_eq!(body["suggestion_accuracy"]["ratio"], 1.0);

    s.dataset.part_boundaries = vec![150_000];
    let (_, p2) = get(&s, "/stats?part=P2").await;
    assert_eq!(p2["dialogues"], 1);
    assert_eq!(p2["total_sentences"], 0);
    let (_, none) = get(&s, "/stats?part=P9").await;
    assert_eq!(none["dialogues"], 0);
}

#[tokio::test]
async fn annotations_need_the_token() {
    let s = state(fixture());
    let (_, list) = get(&s, "/dialogues").await;
    let id = list["dialogues"][1]["dialogue_id"].as_str().unwrap();
    let body = json!({ "dialogue_id": id, "sentence_index": 0, "label": "S" }).to_string();
    assert_eq!(post(&s, None, &body).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(post(&s, Some("wrong"), &body).await.0, StatusCode::UNAUTHORIZED);
    let mut open = s.clone();
    open.token = None;
    assert_eq!(post(&open, Some(TOKEN), &body).await.0, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn posted_correction_reads_back_as_user_corrected() {
    let s = state(fixture());
    let (_, canteen) = get(&s, "/sentences").await;
    let target = canteen["sentences"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["text"] == "Wer hat heute Spätschicht?")
        .unwrap()
        .clone();
    let id = target["dialogue_id"].as_str().unwrap();
    let body = json!({ "dialogue_id": id, "sentence_index": 0, "label": "S" }).to_string();
    let (status, created) = post(&s, Some(TOKEN), &body).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(created["label"], "S");
    assert_eq!(created["label_source"], "user-corrected");

    let (_, d) = get(&s, &format!("/dialogues/{id}")).await;
    assert_eq!(d["records"][0]["label_source"], "user-corrected");
    let snap = s.store.snapshot().unwrap();
    assert_eq!(snap.annotations.last().unwrap().annotator, uid("@curator:sim"));
}

#[tokio::test]
async fn bad_posts_are_rejected() {
    let s = state(fixture());
    let (_, list) = get(&s, "/dialogues").await;
    let id = list["dialogues"][0]["dialogue_id"].as_str().unwrap();
    let cases = [
        (json!({ "dialogue_id": id, "sentence_index": 0, "label": "Z" }).to_string(), StatusCode::BAD_REQUEST),
        ("not json".to_string(), StatusCode::BAD_REQUEST),
        (json!({ "dialogue_id": id, "sentence_index": 0 }).to_string(), StatusCode::BAD_REQUEST),
        (json!({ "dialogue_id": id, "sentence_index": 99, "label": "P" }).to_string(), StatusCode::NOT_FOUND),
        (json!({ "dialogue_id": "d-0", "sentence_index": 0, "label": "P" }).to_string(), StatusCode::NOT_FOUND),
    ];
    for (body, want) in cases {
        assert_eq!(post(&s, Some(TOKEN), &body).await.0, want, "{body}");
    }
    assert!(s.store.snapshot().unwrap().annotations.len() == 3);
}

#[tokio::test]
async fn every_get_is_reproducible_from_the_export() {
    let s = state(fixture());
    let (status, raw) = call(&s, Request::get("/export").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let records = import(&raw[..]).unwrap();
    let snap = s.store.snapshot().unwrap();
    let (direct, _) = export(&snap, &ExportOptions::new(Salt::new("api-test").unwrap())).unwrap();
    assert_eq!(records, direct);

    let (_, sentences) = get(&s, "/sentences").await;
    let from_api: Vec<floorbot::dataset::DatasetRecord> = serde_json::from_value(sentences["sentences"].clone()).unwrap();
    assert_eq!(from_api, records);
    let (_, st) = get(&s, "/stats").await;
    let local = floorbot::dataset::stats(&records, None);
    assert_eq!(st["total_sentences"], local.total_sentences);
    assert_eq!(st["turns"], local.turns);
}
