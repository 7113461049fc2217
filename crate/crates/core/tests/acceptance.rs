//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Set `FLOORBOT_PUBLIC_DATASET` to an NDJSON export of the published corpus
//! (with `part` tags) to additionally check its statistics and record a
//! baseline run on it.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use floorbot::accounting;
use floorbot::bot::{Bot, BotConfig};
use floorbot::classifier::{evaluate, seed_model, BaselineModel, Classifier, ClassifierError};
use floorbot::consent::{ConsentConfig, ConsentPolicy, ConsentState};
use floorbot::dataset::{
    export, import, partition_by_part, stats, temporal_split, to_ndjson, DatasetRecord, DatasetStats,
    ExportOptions, LabelSource, Salt,
};
use floorbot::model::{
    Annotation, AnnotationKind, LabelClass, Message, MessageId, RoomId, Sentence, SentenceRef, Timestamp, UserId,
    DEFAULT_IDLE_WINDOW_MS,
};
use floorbot::segment::segment;
use floorbot::simulate::run_scenario;
use floorbot::store::{AnnotationStore, MemoryStore, RoomReset, SqliteStore, StoreSnapshot};
use floorbot::transport::{
    Ack, CommandSink, Envelope, OutgoingKind, Scenario, SimReport, Step, Target, TransportCommand, TransportError,
    TransportEvent,
};

type Check = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let checks: [(&str, Check); 8] = [
        ("dataset statistics", dataset_statistics),
        ("consent model check", consent_model_check),
        ("reaction-gated persistence", reaction_gated_persistence),
        ("metric oracle", metric_oracle),
        ("suggestion accuracy accounting", suggestion_accuracy),
        ("baseline beats majority class", baseline_beats_majority),
        ("round-trip and privacy", round_trip_and_privacy),
        ("simulate smoke", simulate_smoke),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{secs:.2}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn uid(s: &str) -> UserId {
    UserId::new(s).unwrap()
}

fn mid(s: impl Into<String>) -> MessageId {
    MessageId::new(s.into()).unwrap()
}

fn salt() -> Salt {
    Salt::new(b"acceptance-salt".to_vec()).unwrap()
}

/// Always suggests the same label.
struct Fixed(LabelClass);

impl Classifier for Fixed {
    fn model_id(&self) -> &str {
        "fixed"
    }
    fn predict(&self, text: &str) -> Result<(LabelClass, f64), ClassifierError> {
        if text.trim().is_empty() {
            return Err(ClassifierError::EmptyText);
        }
        Ok((self.0, 0.9))
    }
}

// ---------------------------------------------------------------------------
// Dataset statistics

/// Ground truth of a generated dialogue, kept next to the store.
struct GenDialogue {
    start: Timestamp,
    turns: u64,
    labels: Vec<Option<LabelClass>>,
}

/// A store whose dialogue structure is known by construction: dialogues
/// are separated by idle gaps or bot resets, turns by sender changes.
fn generated_store(rng: &mut ChaCha8Rng) -> (StoreSnapshot, Vec<GenDialogue>) {
    let users: Vec<UserId> = (0..3).map(|i| uid(&format!("@w{i}:plant"))).collect();
    let mut snap = StoreSnapshot::default();
    let mut truth = Vec::new();
    let mut n = 0;
    for r in 0..rng.random_range(1..=3) {
        let room = RoomId::new(format!("!hall{r}")).unwrap();
        let mut t: Timestamp = rng.random_range(0..1_000_000);
        for d in 0..rng.random_range(1..=4) {
            if d > 0 {
                if rng.random_bool(0.5) {
                    t += DEFAULT_IDLE_WINDOW_MS + rng.random_range(1..100_000);
                } else {
                    t += rng.random_range(10..1000);
                    snap.resets.push(RoomReset { room: room.clone(), at: t });
                    t += rng.random_range(0..1000);
                }
            }
            let mut g = GenDialogue { start: t, turns: 0, labels: Vec::new() };
            let mut last_sender = None;
            for k in 0..rng.random_range(1..=6) {
                if k > 0 {
                    t += rng.random_range(1..DEFAULT_IDLE_WINDOW_MS);
                }
                let sender = users.choose(rng).unwrap().clone();
                if last_sender.as_ref() != Some(&sender) {
                    g.turns += 1;
                }
                last_sender = Some(sender.clone());
                n += 1;
                let id = mid(format!("$m{n}"));
                let texts: Vec<String> = (0..rng.random_range(1..=3)).map(|i| format!("Satz {n} {i}.")).collect();
                snap.messages.push(Message::new(id.clone(), room.clone(), sender, t, texts.join(" ")));
                for (index, text) in texts.into_iter().enumerate() {
                    snap.sentences.push(Sentence { message: id.clone(), index, text });
                    let mut label = None;
                    if rng.random_bool(0.7) {
                        for _ in 0..rng.random_range(1..=2) {
                            let l = *LabelClass::ALL.choose(rng).unwrap();
                            snap.annotations.push(Annotation {
                                sentence: SentenceRef::new(id.clone(), index),
                                label: l,
                                annotator: users.choose(rng).unwrap().clone(),
                                kind: if rng.random_bool(0.5) { AnnotationKind::Confirmed } else { AnnotationKind::Corrected },
                                created_at: t,
                                superseded: false,
                            });
                            label = Some(l);
                        }
                    }
                    g.labels.push(label);
                }
            }
            truth.push(g);
        }
    }
    (snap, truth)
}

/// Statistics counted straight from the generator's ground truth.
fn counting_oracle<'a>(dialogues: impl Iterator<Item = &'a GenDialogue>) -> DatasetStats {
    let dialogues: Vec<_> = dialogues.collect();
    let d = dialogues.len() as u64;
    let mut class_counts: BTreeMap<LabelClass, u64> = LabelClass::ALL.iter().map(|c| (*c, 0)).collect();
    let mut unlabeled = 0;
    let mut per_dialogue = Vec::new();
    for g in &dialogues {
        let mut n = 0u64;
        for l in &g.labels {
            match l {
                Some(l) => {
                    *class_counts.get_mut(l).unwrap() += 1;
                    n += 1;
                }
                None => unlabeled += 1,
            }
        }
        per_dialogue.push(n as f64);
    }
    let total: u64 = per_dialogue.iter().map(|&x| x as u64).sum();
    let turns: u64 = dialogues.iter().map(|g| g.turns).sum();
    let mean = if d == 0 { 0.0 } else { total as f64 / d as f64 };
    let sd = if d == 0 {
        0.0
    } else {
        (per_dialogue.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64).sqrt()
    };
    DatasetStats {
        dialogues: d,
        turns,
        turns_per_dialogue: if d == 0 { 0.0 } else { turns as f64 / d as f64 },
        class_counts,
        total_sentences: total,
        sents_per_dialogue_mean: mean,
        sents_per_dialogue_sd: sd,
        unlabeled_sentences: unlabeled,
    }
}

fn same_stats(a: &DatasetStats, b: &DatasetStats) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() < 1e-9;
    a.dialogues == b.dialogues
        && a.turns == b.turns
        && a.class_counts == b.class_counts
        && a.total_sentences == b.total_sentences
        && a.unlabeled_sentences == b.unlabeled_sentences
        && close(a.turns_per_dialogue, b.turns_per_dialogue)
        && close(a.sents_per_dialogue_mean, b.sents_per_dialogue_mean)
        && close(a.sents_per_dialogue_sd, b.sents_per_dialogue_sd)
}

fn public_dataset() -> Option<Result<Vec<DatasetRecord>, String>> {
    let path = std::env::var_os("FLOORBOT_PUBLIC_DATASET")?;
    Some(
        std::fs::File::open(&path)
            .map_err(|e| format!("{}: {e}", path.to_string_lossy()))
            .and_then(|f| import(std::io::BufReader::new(f)).map_err(|e| e.to_string())),
    )
}

fn dataset_statistics() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let opts = ExportOptions::new(salt());
    for case in 0..500 {
        let (snap, truth) = generated_store(&mut rng);
        let (records, _) = export(&snap, &opts).map_err(|e| e.to_string())?;
        let got = stats(&records, None);
        let want = counting_oracle(truth.iter());
        ensure!(same_stats(&got, &want), "store {case}: {got:?} != oracle {want:?}");

        let boundary = truth.choose(&mut rng).unwrap().start;
        let parts = temporal_split(&records, &[boundary]);
        let tagged: Vec<_> = parts.into_iter().flat_map(|p| p.records).collect();
        for (name, later) in [("P1", false), ("P2", true)] {
            let got = stats(&tagged, Some(name));
            let want = counting_oracle(truth.iter().filter(|g| (g.start >= boundary) == later));
            ensure!(same_stats(&got, &want), "store {case} part {name}: {got:?} != oracle {want:?}");
        }
    }
    let mut detail = "500 generated stores match the counting oracle, overall and per part".to_string();
    if let Some(records) = public_dataset() {
        let records = records?;
        let start = Instant::now();
        let s = stats(&records, None);
        let elapsed = start.elapsed().as_secs_f64();
        let c = |l| s.class_counts[&l];
        ensure!(
            (s.dialogues, s.turns, s.total_sentences) == (202, 591, 1027),
            "published dataset: dialogues/turns/sentences {}/{}/{}",
            s.dialogues,
            s.turns,
            s.total_sentences
        );
        ensure!(
            [c(LabelClass::Problem), c(LabelClass::Solution), c(LabelClass::Cause), c(LabelClass::Other)]
                == [267, 142, 165, 453],
            "published dataset: class counts {:?}",
            s.class_counts
        );
        ensure!((s.turns_per_dialogue - 2.60).abs() <= 0.01, "T/D {}", s.turns_per_dialogue);
        ensure!((s.sents_per_dialogue_mean - 5.08).abs() <= 0.01, "Sents/D {}", s.sents_per_dialogue_mean);
        ensure!((s.sents_per_dialogue_sd - 3.28).abs() <= 0.01, "sd {}", s.sents_per_dialogue_sd);
        for (part, n) in [("P1", 553), ("P2", 432), ("P3", 42)] {
            let got = stats(&records, Some(part)).total_sentences;
            ensure!(got == n, "published dataset: part {part} has {got} sentences");
        }
        ensure!(elapsed < 5.0, "stats took {elapsed:.2}s");
        detail.push_str("; published dataset matches");
    } else {
        detail.push_str("; published dataset not provided");
    }
    Ok(detail)
}

// ---------------------------------------------------------------------------
// Consent model check

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Invite,
    Remove,
    Msg(usize),
    Accept(usize),
    Reject(usize),
}

const ALPHABET: [Ev; 8] = [
    Ev::Invite,
    Ev::Remove,
    Ev::Msg(0),
    Ev::Msg(1),
    Ev::Accept(0),
    Ev::Accept(1),
    Ev::Reject(0),
    Ev::Reject(1),
];

/// Minimal chat server for one room: tracks bot membership and queues
/// echoes of what the bot sends.
#[derive(Clone, Default)]
struct RoomServer {
    member: bool,
    next: u64,
    consent_prompt: Option<MessageId>,
    echoes: VecDeque<TransportEvent>,
    left: bool,
}

impl CommandSink for RoomServer {
    fn execute(&mut self, command: TransportCommand) -> Result<Ack, TransportError> {
        match command {
            TransportCommand::JoinRoom { .. } => {
                self.member = true;
                Ok(Ack::Done)
            }
            TransportCommand::LeaveRoom { .. } => {
                self.member = false;
                self.left = true;
                Ok(Ack::Done)
            }
            _ if !self.member => Err(TransportError::Terminal("not a member".into())),
            TransportCommand::SendMessage { room, body, kind, .. } => {
                self.next += 1;
                let id = mid(format!("$bot{}", self.next));
                if kind == OutgoingKind::ConsentPrompt {
                    self.consent_prompt = Some(id.clone());
                }
                let message = Message::new(id.clone(), room, uid(MC_BOT), 0, body);
                self.echoes.push_back(TransportEvent::MessageReceived { message });
                Ok(Ack::Sent(id))
            }
            TransportCommand::SendReaction { room, target, symbol } => {
                self.echoes.push_back(TransportEvent::ReactionReceived { room, target, user: uid(MC_BOT), symbol });
                Ok(Ack::Done)
            }
        }
    }
}

const MC_BOT: &str = "@bot:plant";
const MC_USERS: [&str; 2] = ["@a:plant", "@b:plant"];

/// Reference consent model, written from the rules rather than the code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RefState {
    Never,
    Awaiting,
    Recording,
    Declined,
    Departed,
}

#[derive(Clone)]
struct Node {
    bot: Bot<MemoryStore>,
    server: RoomServer,
    state: RefState,
    accepted: [bool; 2],
    /// Messages the reference model expects in the store.
    recorded: BTreeSet<MessageId>,
    recording_entries: usize,
    t: Timestamp,
    seq: u64,
}

#[derive(Default)]
struct Coverage {
    traces: u64,
    vetoes: u64,
    departures_on_message: u64,
    hidden_messages: u64,
    re_recordings: u64,
}

fn room() -> RoomId {
    RoomId::new("!line").unwrap()
}

impl Node {
    fn new(policy: ConsentPolicy) -> Self {
        let mut config = BotConfig::new(uid(MC_BOT));
        config.consent = ConsentConfig { policy, reconsent_on_join: false };
        let bot = Bot::new(config, MemoryStore::new(), Arc::new(Fixed(LabelClass::Problem))).unwrap();
        Node {
            bot,
            server: RoomServer::default(),
            state: RefState::Never,
            accepted: [false; 2],
            recorded: BTreeSet::new(),
            recording_entries: 0,
            t: 0,
            seq: 0,
        }
    }

    fn deliver(&mut self, event: TransportEvent) -> Result<(), String> {
        let env = Envelope { at: self.t, event };
        self.bot.handle(&env, &mut self.server).map_err(|e| e.to_string())?;
        while let Some(echo) = self.server.echoes.pop_front() {
            let env = Envelope { at: self.t, event: echo };
            self.bot.handle(&env, &mut self.server).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    /// Applies `ev`; returns false when the event cannot happen here.
    fn step(&mut self, ev: Ev, policy: ConsentPolicy, cov: &mut Coverage) -> Result<bool, String> {
        self.t += 1000;
        let user = |i: usize| uid(MC_USERS[i]);
        match ev {
            Ev::Invite => {
                if self.server.member {
                    return Ok(false);
                }
                let members = MC_USERS.iter().map(|u| uid(u)).collect();
                self.deliver(TransportEvent::Invited { room: room(), members })?;
                if matches!(self.state, RefState::Never | RefState::Declined | RefState::Departed) {
                    self.state = RefState::Awaiting;
                    self.accepted = [false; 2];
                }
            }
            Ev::Remove => {
                if !self.server.member {
                    return Ok(false);
                }
                self.deliver(TransportEvent::BotRemoved { room: room() })?;
                self.server.member = false;
                if matches!(self.state, RefState::Awaiting | RefState::Recording) {
                    self.state = RefState::Departed;
                }
            }
            Ev::Msg(i) => {
                self.seq += 1;
                let id = mid(format!("$u{}", self.seq));
                if !self.server.member {
                    cov.hidden_messages += 1;
                    return Ok(true);
                }
                let message = Message::new(id.clone(), room(), user(i), self.t, "Die Presse steht.");
                self.server.left = false;
                self.deliver(TransportEvent::MessageReceived { message })?;
                match self.state {
                    RefState::Awaiting => {
                        self.state = RefState::Departed;
                        cov.departures_on_message += 1;
                        ensure!(self.server.left && !self.server.member, "bot stayed after chatter while awaiting");
                    }
                    RefState::Recording => {
                        self.recorded.insert(id);
                    }
                    _ => {}
                }
            }
            Ev::Accept(i) | Ev::Reject(i) => {
                let accept = matches!(ev, Ev::Accept(_));
                let Some(prompt) = self.server.consent_prompt.clone().filter(|_| self.server.member) else {
                    return Ok(false);
                };
                let symbol = if accept { "✅" } else { "❌" };
                self.server.left = false;
                self.deliver(TransportEvent::ReactionReceived {
                    room: room(),
                    target: prompt,
                    user: user(i),
                    symbol: symbol.into(),
                })?;
                if self.state == RefState::Awaiting {
                    if accept {
                        self.accepted[i] = true;
                        let quorum = match policy {
                            ConsentPolicy::FirstAccept => true,
                            ConsentPolicy::Unanimous => self.accepted.iter().all(|a| *a),
                        };
                        if quorum {
                            self.state = RefState::Recording;
                            self.recording_entries += 1;
                            if self.recording_entries > 1 {
                                cov.re_recordings += 1;
                            }
                        }
                    } else {
                        self.state = RefState::Declined;
                        cov.vetoes += 1;
                        ensure!(self.server.left && !self.server.member, "bot stayed after a veto");
                    }
                }
            }
        }
        self.verify()?;
        Ok(true)
    }

    fn verify(&self) -> Result<(), String> {
        let want = match self.state {
            RefState::Never => None,
            RefState::Awaiting => Some(ConsentState::AwaitingConsent),
            RefState::Recording => Some(ConsentState::Recording),
            RefState::Declined => Some(ConsentState::Declined),
            RefState::Departed => Some(ConsentState::Departed),
        };
        let got = self.bot.state(&room());
        ensure!(got == want, "bot state {got:?}, reference {want:?}");
        let snap = self.bot.store().snapshot().map_err(|e| e.to_string())?;
        let stored: BTreeSet<MessageId> = snap.messages.iter().map(|m| m.id.clone()).collect();
        ensure!(stored == self.recorded, "stored {stored:?}, expected {:?}", self.recorded);
        ensure!(
            snap.resets.len() == self.recording_entries,
            "{} dialogue resets for {} recording periods",
            snap.resets.len(),
            self.recording_entries
        );
        Ok(())
    }
}

fn explore(
    node: &Node,
    depth: usize,
    trace: &mut Vec<Ev>,
    policy: ConsentPolicy,
    cov: &mut Coverage,
) -> Result<(), String> {
    cov.traces += 1;
    if depth == 0 {
        return Ok(());
    }
    for ev in ALPHABET {
        let mut next = node.clone();
        trace.push(ev);
        let enabled = next
            .step(ev, policy, cov)
            .map_err(|e| format!("{policy:?} trace {trace:?}: {e}"))?;
        if enabled {
            explore(&next, depth - 1, trace, policy, cov)?;
        }
        trace.pop();
    }
    Ok(())
}

fn consent_model_check() -> Result<String, String> {
    let mut parts = Vec::new();
    for policy in [ConsentPolicy::FirstAccept, ConsentPolicy::Unanimous] {
        // One worker per first event.
        let results: Vec<Result<Coverage, String>> = std::thread::scope(|s| {
            let handles: Vec<_> = ALPHABET
                .iter()
                .map(|&first| {
                    s.spawn(move || {
                        let mut cov = Coverage::default();
                        let mut node = Node::new(policy);
                        let mut trace = vec![first];
                        let root_ok = node.verify().map(|_| ());
                        root_ok?;
                        if node.step(first, policy, &mut cov).map_err(|e| format!("{policy:?} [{first:?}]: {e}"))? {
                            explore(&node, 7, &mut trace, policy, &mut cov)?;
                        }
                        Ok(cov)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut total = Coverage::default();
        for r in results {
            let c = r?;
            total.traces += c.traces;
            total.vetoes += c.vetoes;
            total.departures_on_message += c.departures_on_message;
            total.hidden_messages += c.hidden_messages;
            total.re_recordings += c.re_recordings;
        }
        ensure!(total.vetoes > 0 && total.departures_on_message > 0, "{policy:?}: rules never exercised");
        ensure!(total.hidden_messages > 0 && total.re_recordings > 0, "{policy:?}: no gap traces");
        parts.push(format!(
            "{policy:?}: {} traces, {} vetoes, {} departures on chatter, {} re-recordings after a gap",
            total.traces, total.vetoes, total.departures_on_message, total.re_recordings
        ));
    }
    Ok(format!("all traces up to length 8 agree with the reference model ({})", parts.join("; ")))
}

// ---------------------------------------------------------------------------
// Randomized bot scenarios

const SIM_BOT: &str = "@bot:sim";
const SIM_USERS: [&str; 2] = ["@u0:sim", "@u1:sim"];
const REACTIONS: [&str; 12] = ["👍", "❗", "🔍", "🔧", "💬", "1❗", "2🔍", "1\u{FE0F}\u{20E3}🔧", "3💬", "🎉", "✅", "❌"];

struct GenOptions {
    edits_and_redactions: bool,
}

/// Random single-room scenario. Bodies are unique per message so that a
/// body can be searched for in an export.
fn random_scenario(rng: &mut ChaCha8Rng, opts: &GenOptions) -> (Scenario, HashMap<MessageId, String>) {
    let r = RoomId::new("!line3").unwrap();
    let users: Vec<UserId> = SIM_USERS.iter().map(|u| uid(u)).collect();
    let mut sc = Scenario::new(uid(SIM_BOT));
    sc.push(0, Step::CreateRoom { room: r.clone(), members: users.clone() });
    let mut bodies = HashMap::new();
    let mut sent: Vec<MessageId> = Vec::new();
    let mut t = 0;
    for _ in 0..rng.random_range(5..40) {
        t += rng.random_range(1..120_000);
        let user = users.choose(rng).unwrap().clone();
        let roll = rng.random_range(0..100);
        let step = match roll {
            0..=14 => Step::React { room: r.clone(), user, target: Target::ConsentPrompt, symbol: "✅".into() },
            15..=16 => Step::React { room: r.clone(), user, target: Target::ConsentPrompt, symbol: "❌".into() },
            17..=19 => Step::RemoveBot { room: r.clone() },
            20..=23 => Step::InviteBot { room: r.clone() },
            24..=51 if !sent.is_empty() => Step::React {
                room: r.clone(),
                user,
                target: Target::PromptFor(sent.choose(rng).unwrap().clone()),
                symbol: REACTIONS.choose(rng).unwrap().to_string(),
            },
            52..=57 if opts.edits_and_redactions && !sent.is_empty() => {
                let n = bodies.len();
                let id = mid(format!("$e{n}"));
                let body = format!("Ventil {n} klemmt wieder.");
                bodies.insert(id.clone(), body.clone());
                let target = sent.choose(rng).unwrap().clone();
                Step::Edit { room: r.clone(), user, target, body, id: Some(id) }
            }
            58..=63 if opts.edits_and_redactions && !sent.is_empty() => {
                Step::Redact { room: r.clone(), user, target: sent.choose(rng).unwrap().clone() }
            }
            _ => {
                let n = bodies.len();
                let id = mid(format!("$m{n}"));
                let body = if rng.random_bool(0.3) {
                    format!("Ventil {n} klemmt. Der Sensor ist verschmutzt.")
                } else {
                    format!("Ventil {n} klemmt.")
                };
                bodies.insert(id.clone(), body.clone());
                sent.push(id.clone());
                Step::Send { room: r.clone(), user, body, id: Some(id) }
            }
        };
        sc.push(t, step);
    }
    (sc, bodies)
}

/// Counts label reactions that should become annotation rows, reading
/// only the simulator's ground-truth trace and command log.
fn valid_label_reactions(report: &SimReport) -> usize {
    let bot = uid(SIM_BOT);
    // Bot messages echo in the order they were sent.
    let sends: Vec<&TransportCommand> = report
        .commands
        .iter()
        .map(|(_, c)| c)
        .filter(|c| matches!(c, TransportCommand::SendMessage { .. }))
        .collect();
    let mut bot_msgs = sends.into_iter();
    let mut consent_prompt: Option<MessageId> = None;
    let mut prompt_for: HashMap<MessageId, MessageId> = HashMap::new();
    let mut sentences: HashMap<MessageId, usize> = HashMap::new();
    let mut state = RefState::Never;
    let mut count = 0;
    for e in report.trace.iter().filter(|e| e.delivered) {
        match &e.event {
            TransportEvent::Invited { .. } => {
                if matches!(state, RefState::Never | RefState::Declined | RefState::Departed) {
                    state = RefState::Awaiting;
                }
            }
            TransportEvent::BotRemoved { .. } => {
                if matches!(state, RefState::Awaiting | RefState::Recording) {
                    state = RefState::Departed;
                }
            }
            TransportEvent::MessageReceived { message } if message.sender == bot => {
                let Some(TransportCommand::SendMessage { kind, reply_to, .. }) = bot_msgs.next() else {
                    panic!("echo without a send");
                };
                match kind {
                    OutgoingKind::ConsentPrompt => consent_prompt = Some(message.id.clone()),
                    OutgoingKind::SuggestionPrompt => {
                        prompt_for.insert(message.id.clone(), reply_to.clone().unwrap());
                    }
                    _ => {}
                }
            }
            TransportEvent::MessageReceived { message } => match state {
                RefState::Awaiting => state = RefState::Departed,
                RefState::Recording => {
                    sentences.insert(message.id.clone(), segment(&message.body).len());
                }
                _ => {}
            },
            TransportEvent::ReactionReceived { target, user, symbol, .. } if *user != bot => match state {
                RefState::Awaiting if Some(target) == consent_prompt.as_ref() => match symbol.as_str() {
                    "✅" => state = RefState::Recording,
                    "❌" => state = RefState::Declined,
                    _ => {}
                },
                RefState::Recording => {
                    let Some(n) = prompt_for.get(target).and_then(|m| sentences.get(m)) else { continue };
                    let (ordinal, rest) = match symbol.chars().next() {
                        Some(c) if c.is_ascii_digit() => {
                            let rest = &symbol[1..];
                            (Some(c.to_digit(10).unwrap() as usize), rest.strip_prefix("\u{FE0F}\u{20E3}").unwrap_or(rest))
                        }
                        _ => (None, symbol.as_str()),
                    };
                    let is_label = ["👍", "❗", "🔍", "🔧", "💬"].contains(&rest);
                    let addresses = match ordinal {
                        None => *n == 1,
                        Some(k) => k >= 1 && k <= *n,
                    };
                    if is_label && addresses {
                        count += 1;
                    }
                }
                _ => {}
            },
            _ => {}
        }
    }
    count
}

fn reaction_gated_persistence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut total, mut nonzero) = (0, 0);
    for case in 0..1000 {
        let (sc, _) = random_scenario(&mut rng, &GenOptions { edits_and_redactions: false });
        let mut bot = Bot::new(BotConfig::new(uid(SIM_BOT)), MemoryStore::new(), Arc::new(seed_model())).unwrap();
        let report = run_scenario(&sc, &mut bot).map_err(|e| e.to_string())?;
        let rows = bot.store().snapshot().unwrap().annotations.len();
        let want = valid_label_reactions(&report);
        ensure!(rows == want, "scenario {case}: {rows} annotation rows, {want} valid label reactions\n{}", sc.to_toml());
        total += rows;
        nonzero += usize::from(rows > 0);
    }
    ensure!(nonzero > 100, "only {nonzero} scenarios produced annotations");
    Ok(format!("1000 scenarios, {total} annotation rows, each equal to the valid label reactions"))
}

// ---------------------------------------------------------------------------
// Metrics

/// Accuracy and macro-F1 straight from the definitions.
fn brute_force_metrics(preds: &[LabelClass], golds: &[LabelClass]) -> (f64, f64) {
    let n = preds.len() as f64;
    let correct = preds.iter().zip(golds).filter(|(p, g)| p == g).count() as f64;
    let mut f1s = 0.0;
    for c in LabelClass::ALL {
        let tp = preds.iter().zip(golds).filter(|(p, g)| **p == c && **g == c).count() as f64;
        let fp = preds.iter().zip(golds).filter(|(p, g)| **p == c && **g != c).count() as f64;
        let fneg = preds.iter().zip(golds).filter(|(p, g)| **p != c && **g == c).count() as f64;
        let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
        let recall = if tp + fneg == 0.0 { 0.0 } else { tp / (tp + fneg) };
        f1s += if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    }
    (correct / n, f1s / 4.0)
}

fn metric_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.random_range(1..=60);
        let skew = rng.random_bool(0.3);
        let pick = |rng: &mut ChaCha8Rng| {
            if skew {
                LabelClass::ALL[rng.random_range(0..2)]
            } else {
                *LabelClass::ALL.choose(rng).unwrap()
            }
        };
        let golds: Vec<_> = (0..n).map(|_| pick(&mut rng)).collect();
        let preds: Vec<_> = golds
            .iter()
            .map(|g| if rng.random_bool(0.5) { *g } else { pick(&mut rng) })
            .collect();
        let report = evaluate(&preds, &golds).map_err(|e| e.to_string())?;
        let (acc, f1) = brute_force_metrics(&preds, &golds);
        let diff = (report.accuracy - acc).abs().max((report.macro_f1 - f1).abs());
        worst = worst.max(diff);
        ensure!(diff <= 1e-9, "instance {case}: ({}, {}) vs oracle ({acc}, {f1})", report.accuracy, report.macro_f1);
    }
    let all: Vec<_> = LabelClass::ALL.iter().cycle().take(12).copied().collect();
    let perfect = evaluate(&all, &all).map_err(|e| e.to_string())?;
    ensure!((perfect.accuracy, perfect.macro_f1) == (1.0, 1.0), "perfect: {perfect:?}");
    let disjoint = evaluate(&[LabelClass::Other; 10], &[LabelClass::Problem; 10]).map_err(|e| e.to_string())?;
    ensure!((disjoint.accuracy, disjoint.macro_f1) == (0.0, 0.0), "disjoint: {disjoint:?}");
    Ok(format!("1000 instances, max deviation {worst:.1e}; perfect (1, 1); disjoint (0, 0)"))
}

// ---------------------------------------------------------------------------
// Suggestion accuracy

fn suggestion_accuracy() -> Result<String, String> {
    let r = RoomId::new("!line1").unwrap();
    let a = uid("@alice:sim");
    let mut sc = Scenario::new(uid(SIM_BOT));
    sc.push(0, Step::CreateRoom { room: r.clone(), members: vec![a.clone()] });
    sc.push(1, Step::React { room: r.clone(), user: a.clone(), target: Target::ConsentPrompt, symbol: "✅".into() });
    for i in 0..60 {
        let id = mid(format!("$q{i}"));
        let t = 10 + i as Timestamp * 10;
        sc.push(t, Step::Send { room: r.clone(), user: a.clone(), body: format!("Störung {i} an Band 2."), id: Some(id.clone()) });
        let symbol = if i < 41 { "👍" } else { "🔍" };
        sc.push(t + 1, Step::React { room: r.clone(), user: a.clone(), target: Target::PromptFor(id), symbol: symbol.into() });
    }
    let mut bot = Bot::new(BotConfig::new(uid(SIM_BOT)), MemoryStore::new(), Arc::new(Fixed(LabelClass::Problem))).unwrap();
    run_scenario(&sc, &mut bot).map_err(|e| e.to_string())?;
    let snap = bot.store().snapshot().unwrap();
    let by_kind = accounting::from_kinds(&snap);
    let by_pairing = accounting::recompute(&snap);
    ensure!(by_kind == by_pairing, "routes disagree: {by_kind:?} vs {by_pairing:?}");
    ensure!((by_kind.confirmed, by_kind.corrected) == (41, 19), "counted {by_kind:?}");
    let ratio = by_kind.ratio().unwrap();
    ensure!((ratio - 41.0 / 60.0).abs() < 1e-12, "ratio {ratio}");
    ensure!(format!("{ratio:.4}") == "0.6833", "ratio {ratio:.4}");
    Ok(format!("41 confirmed, 19 corrected, accuracy {ratio:.4} by both accounting routes"))
}

// ---------------------------------------------------------------------------
// Baseline classifier

fn synthetic_corpus(rng: &mut ChaCha8Rng, n: usize) -> Vec<(String, LabelClass)> {
    let vocab: [&[&str]; 4] = [
        &["ausgefallen", "blockiert", "steht", "defekt", "stoerung", "broken", "stuck", "fault"],
        &["weil", "verschmutzt", "ursache", "verschlissen", "because", "worn", "dirty", "loose"],
        &["getauscht", "repariert", "gereinigt", "neugestartet", "replaced", "fixed", "cleaned", "restarted"],
        &["danke", "pause", "morgen", "kaffee", "thanks", "later", "lunch", "okay"],
    ];
    let filler = ["die", "der", "an", "band", "maschine", "linie", "ist", "the", "line", "at"];
    (0..n)
        .map(|i| {
            // Imbalanced on purpose so the majority class is well defined.
            let class = match i % 10 {
                0..=3 => LabelClass::Other,
                4..=5 => LabelClass::Problem,
                6..=7 => LabelClass::Cause,
                _ => LabelClass::Solution,
            };
            let mut words: Vec<&str> = (0..2).map(|_| *vocab[class.index()].choose(rng).unwrap()).collect();
            words.extend((0..4).map(|_| *filler.choose(rng).unwrap()));
            let k = words.len();
            for j in 0..k {
                words.swap(j, rng.random_range(0..k));
            }
            (words.join(" "), class)
        })
        .collect()
}

fn majority_accuracy(train: &[(String, LabelClass)], test: &[(String, LabelClass)]) -> f64 {
    let mut counts = [0usize; 4];
    for (_, l) in train {
        counts[l.index()] += 1;
    }
    let majority = LabelClass::ALL[(0..4).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap()];
    test.iter().filter(|(_, l)| *l == majority).count() as f64 / test.len() as f64
}

fn baseline_run(train: &[(String, LabelClass)], test: &[(String, LabelClass)]) -> Result<(f64, f64), String> {
    let model = BaselineModel::train(train).map_err(|e| e.to_string())?;
    let preds: Vec<_> = test.iter().map(|(t, _)| model.predict(t).map(|p| p.0)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let golds: Vec<_> = test.iter().map(|(_, l)| *l).collect();
    let r = evaluate(&preds, &golds).map_err(|e| e.to_string())?;
    Ok((r.accuracy, r.macro_f1))
}

fn baseline_beats_majority() -> Result<String, String> {
    let run = || -> Result<(f64, f64), String> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut corpus = synthetic_corpus(&mut rng, 200);
        for i in (1..corpus.len()).rev() {
            corpus.swap(i, rng.random_range(0..=i));
        }
        let (train, test) = corpus.split_at(150);
        Ok((baseline_run(train, test)?.0, majority_accuracy(train, test)))
    };
    let (acc, majority) = run()?;
    ensure!(run()? == (acc, majority), "not deterministic under a fixed seed");
    ensure!(acc - majority >= 0.3, "baseline {acc:.3} vs majority {majority:.3}");
    let mut detail = format!("synthetic corpus: baseline {acc:.3} vs majority {majority:.3}");
    if let Some(records) = public_dataset() {
        let records = records?;
        let parts = partition_by_part(&records);
        let labeled = |names: &[&str]| -> Vec<(String, LabelClass)> {
            parts
                .iter()
                .filter(|p| names.contains(&p.name.as_str()))
                .flat_map(|p| p.records.iter())
                .filter_map(|r| r.label.map(|l| (r.text.clone(), l)))
                .collect()
        };
        let (train, test) = (labeled(&["P1", "P2"]), labeled(&["P3"]));
        let (acc, f1) = baseline_run(&train, &test)?;
        detail.push_str(&format!("; published P1+P2 -> P3: accuracy {acc:.4}, macro-F1 {f1:.4}"));
    }
    Ok(detail)
}

// ---------------------------------------------------------------------------
// Round trip and privacy

fn round_trip_and_privacy() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let opts = ExportOptions::new(salt());
    let (mut records_total, mut redacted_total) = (0, 0);
    for case in 0..200 {
        let (sc, bodies) = random_scenario(&mut rng, &GenOptions { edits_and_redactions: true });
        let store = SqliteStore::open_in_memory().map_err(|e| e.to_string())?;
        let mut bot = Bot::new(BotConfig::new(uid(SIM_BOT)), store, Arc::new(seed_model())).unwrap();
        run_scenario(&sc, &mut bot).map_err(|e| e.to_string())?;
        let snap = bot.store().snapshot().map_err(|e| e.to_string())?;

        let (records, _) = export(&snap, &opts).map_err(|e| format!("scenario {case}: {e}"))?;
        let bytes = to_ndjson(&records);
        let back = import(bytes.as_bytes()).map_err(|e| e.to_string())?;
        ensure!(back == records, "scenario {case}: import(export(S)) differs");
        ensure!(to_ndjson(&back) == bytes, "scenario {case}: re-export is not byte-identical");
        let (via_memory, _) = export(&snap, &opts).map_err(|e| e.to_string())?;
        let from_copy = export(&MemoryStore::from_snapshot(snap.clone()).snapshot().unwrap(), &opts)
            .map_err(|e| e.to_string())?
            .0;
        ensure!(via_memory == from_copy, "scenario {case}: export depends on the store backend");

        let mut ids: HashSet<String> = SIM_USERS.iter().map(|u| u.to_string()).collect();
        ids.insert(SIM_BOT.into());
        for id in &ids {
            ensure!(!bytes.contains(id.as_str()), "scenario {case}: raw user id {id} in export");
        }
        for t in &snap.tombstones {
            let body = &bodies[&t.message];
            ensure!(!bytes.contains(body.as_str()), "scenario {case}: redacted body {body:?} in export");
            redacted_total += 1;
        }
        ensure!(
            records.iter().all(|r| r.label.is_none() || r.label_source != LabelSource::None),
            "scenario {case}: label without source"
        );
        records_total += records.len();
    }
    ensure!(redacted_total > 0, "generator produced no redactions");
    Ok(format!("200 stores, {records_total} records round-tripped, {redacted_total} redacted messages absent"))
}

// ---------------------------------------------------------------------------
// End-to-end smoke

fn simulate_smoke() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("export.ndjson");
    let scenario = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/happy_path.toml");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_floorbot"))
        .args(["simulate", scenario, "--export"])
        .arg(&out)
        .env("FLOORBOT_SALT", "smoke-test-salt")
        .env_remove("FLOORBOT_CONFIG")
        .current_dir(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        status.status.code() == Some(0),
        "exit {:?}: {}",
        status.status.code(),
        String::from_utf8_lossy(&status.stderr)
    );
    let text = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
    let records = import(text.as_bytes()).map_err(|e| e.to_string())?;
    let labeled: Vec<_> = records.iter().filter(|r| r.label.is_some()).collect();
    ensure!(labeled.len() == 3, "{} labeled sentences", labeled.len());
    ensure!(
        labeled.iter().all(|r| r.label_source == LabelSource::UserConfirmed),
        "label sources {:?}",
        labeled.iter().map(|r| r.label_source).collect::<Vec<_>>()
    );
    let labels: Vec<_> = labeled.iter().map(|r| r.label.unwrap().code()).collect();
    Ok(format!("exit 0, 3 user-confirmed labels {labels:?}"))
}
