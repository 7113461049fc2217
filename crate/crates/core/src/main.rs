use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use log::{error, info, warn};

use floorbot::api::{self, ApiState};
use floorbot::bot::Bot;
use floorbot::classifier::{evaluate, parse_corpus, BaselineModel, Classifier};
use floorbot::config::{Config, TransportKind};
use floorbot::dataset::{
    export, import, partition_by_part, stats, temporal_split, write_ndjson, ConflictPolicy, DatasetError,
    DatasetRecord, ExportOptions, Salt, SALT_ENV,
};
use floorbot::model::{LabelClass, Timestamp};
use floorbot::service::{self, Backoff};
use floorbot::simulate::{check_expectations, run_scenario};
use floorbot::store::{AnnotationStore, MemoryStore, SharedStore, SqliteStore};
use floorbot::transport::matrix::{MatrixConfig, MatrixTransport};
use floorbot::transport::Scenario;

/// Consent-gated annotation bot for work chat rooms.
#[derive(Parser)]
#[command(name = "floorbot", version)]
struct Cli {
    /// Config file (TOML). Values can be overridden with FLOORBOT_<SECTION>_<KEY>.
    #[arg(long, global = true, env = "FLOORBOT_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the bot and the REST API.
    Serve,
    /// Run a scenario against an in-memory bot and print the trace diff.
    Simulate {
        scenario: PathBuf,
        /// Write the resulting dataset here.
        #[arg(long)]
        export: Option<PathBuf>,
        /// Keep the resulting store in this file instead of memory.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Export the store as an anonymized NDJSON dataset (salt from FLOORBOT_SALT).
    Export {
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        conflicts: Option<ConflictPolicy>,
        /// Emit unreviewed suggestions as model-only labels.
        #[arg(long)]
        include_suggestions: bool,
        /// Purge pending redactions first instead of refusing.
        #[arg(long)]
        compact: bool,
    },
    /// Validate a dataset file and write it back normalized.
    Import {
        input: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Dialogue, turn and class statistics of a dataset file.
    Stats {
        input: PathBuf,
        #[arg(long)]
        part: Option<String>,
    },
    /// Train the naive Bayes baseline.
    TrainBaseline {
        /// `label<TAB>text` file, or an NDJSON dataset (labeled sentences only).
        corpus: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Restrict a dataset corpus to these parts.
        #[arg(long)]
        part: Vec<String>,
    },
    /// Predict a label for every sentence of a dataset, one per line.
    Predict {
        input: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        part: Vec<String>,
        /// Only sentences that carry a label, for comparison with `evaluate`.
        #[arg(long)]
        labeled_only: bool,
    },
    /// Accuracy, per-class and macro F1 of predictions against gold labels.
    Evaluate {
        /// One label (P/C/S/O) per line.
        #[arg(long)]
        pred: PathBuf,
        /// One label per line, or an NDJSON dataset (its labeled sentences).
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        part: Vec<String>,
    },
    /// Tag dataset records with parts P1..Pn by dialogue start time.
    Split {
        input: PathBuf,
        /// Ascending start times (ms) of parts 2..n, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        boundaries: Vec<Timestamp>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Purge redacted content from the store file.
    Compact,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

type Outcome = Result<(), Failure>;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve) { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLOORBOT_LOG", default_level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(m) | Failure::Runtime(m)) = &f;
            eprintln!("floorbot: {m}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let config = || Config::load(cli.config.as_deref()).map_err(config_err);
    match cli.command {
        Command::Serve => serve(config()?),
        Command::Simulate { scenario, export, store } => simulate(config()?, &scenario, export.as_deref(), store.as_deref()),
        Command::Export { out, conflicts, include_suggestions, compact } => {
            let config = config()?;
            let salt = salt()?;
            let mut store = SqliteStore::open(&config.store.path).map_err(runtime_err)?;
            if compact {
                store.compact().map_err(runtime_err)?;
            }
            let snap = store.snapshot().map_err(runtime_err)?;
            let opts = ExportOptions {
                salt,
                conflicts: conflicts.unwrap_or(config.dataset.conflicts),
                include_suggestions: include_suggestions || config.dataset.include_suggestions,
                idle_window_ms: config.dataset.idle_window_ms(),
            };
            let (records, _) = export(&snap, &opts).map_err(|e| match e {
                DatasetError::PendingRedactions => runtime_err(format!("{e} (or pass --compact)")),
                e => runtime_err(e),
            })?;
            write_records(&records, out.as_deref())
        }
        Command::Import { input, out } => {
            let records = read_dataset(&input)?;
            let dialogues = records.iter().map(|r| &r.dialogue_id).collect::<std::collections::BTreeSet<_>>().len();
            eprintln!("{} records in {dialogues} dialogues", records.len());
            match out {
                Some(path) => write_records(&records, Some(&path)),
                None => Ok(()),
            }
        }
        Command::Stats { input, part } => {
            let records = read_dataset(&input)?;
            print_json(&stats(&records, part.as_deref()))
        }
        Command::TrainBaseline { corpus, out, part } => {
            let examples = read_corpus(&corpus, &part)?;
            let model = BaselineModel::train(&examples).map_err(runtime_err)?;
            std::fs::write(&out, model.to_json()).map_err(|e| runtime_err(format!("{}: {e}", out.display())))?;
            eprintln!("trained {} on {} sentences", model.model_id, examples.len());
            Ok(())
        }
        Command::Predict { input, model, part, labeled_only } => {
            let model: Box<dyn Classifier> = match model {
                Some(p) => Box::new(service::load_model(&p).map_err(config_err)?),
                None => Box::new(floorbot::classifier::seed_model()),
            };
            let records = select(read_dataset(&input)?, &part);
            let mut out = BufWriter::new(io::stdout().lock());
            for r in records.iter().filter(|r| !labeled_only || r.label.is_some()) {
                let (label, _) = model.predict(&r.text).map_err(runtime_err)?;
                writeln!(out, "{}", label.code()).map_err(runtime_err)?;
            }
            out.flush().map_err(runtime_err)
        }
        Command::Evaluate { pred, gold, part } => {
            let preds = read_labels(&pred, &[])?;
            let golds = read_labels(&gold, &part)?;
            print_json(&evaluate(&preds, &golds).map_err(runtime_err)?)
        }
        Command::Split { input, boundaries, out } => {
            if !boundaries.windows(2).all(|w| w[0] < w[1]) {
                return Err(config_err("--boundaries must be strictly ascending"));
            }
            let parts = temporal_split(&read_dataset(&input)?, &boundaries);
            for p in &parts {
                let dialogues = p.records.iter().map(|r| &r.dialogue_id).collect::<std::collections::BTreeSet<_>>().len();
                eprintln!("{}: {dialogues} dialogues, {} sentences", p.name, p.records.len());
            }
            let mut tagged: Vec<DatasetRecord> = parts.into_iter().flat_map(|p| p.records).collect();
            tagged.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
            write_records(&tagged, out.as_deref())
        }
        Command::Compact => {
            let config = config()?;
            let mut store = SqliteStore::open(&config.store.path).map_err(runtime_err)?;
            store.compact().map_err(runtime_err)
        }
    }
}

fn salt() -> Result<Salt, Failure> {
    Salt::from_env().map_err(config_err)
}

fn print_json<T: serde::Serialize>(value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(runtime_err)?;
    println!("{text}");
    Ok(())
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>, Failure> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).map_err(|e| runtime_err(format!("{}: {e}", path.display())))?;
    Ok(Box::new(BufReader::new(f)))
}

fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, Failure> {
    import(open_input(path)?).map_err(|e| runtime_err(format!("{}: {e}", path.display())))
}

fn write_records(records: &[DatasetRecord], out: Option<&Path>) -> Outcome {
    let result = match out {
        Some(p) => {
            let f = File::create(p).map_err(|e| runtime_err(format!("{}: {e}", p.display())))?;
            write_ndjson(records, BufWriter::new(f))
        }
        None => write_ndjson(records, BufWriter::new(io::stdout().lock())),
    };
    result.map_err(runtime_err)
}

fn select(records: Vec<DatasetRecord>, parts: &[String]) -> Vec<DatasetRecord> {
    if parts.is_empty() {
        return records;
    }
    let mut out: Vec<DatasetRecord> = partition_by_part(&records)
        .into_iter()
        .filter(|p| parts.contains(&p.name))
        .flat_map(|p| p.records)
        .collect();
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out
}

fn is_ndjson(text: &str) -> bool {
    text.trim_start().starts_with('{')
}

fn read_text(path: &Path) -> Result<String, Failure> {
    let mut text = String::new();
    open_input(path)?
        .read_to_string(&mut text)
        .map_err(|e| runtime_err(format!("{}: {e}", path.display())))?;
    Ok(text)
}

fn read_corpus(path: &Path, parts: &[String]) -> Result<Vec<(String, LabelClass)>, Failure> {
    let text = read_text(path)?;
    if is_ndjson(&text) {
        let records = import(text.as_bytes()).map_err(|e| runtime_err(format!("{}: {e}", path.display())))?;
        return Ok(select(records, parts)
            .into_iter()
            .filter_map(|r| r.label.map(|l| (r.text, l)))
            .collect());
    }
    parse_corpus(&text).map_err(|(line, m)| runtime_err(format!("{}:{line}: {m}", path.display())))
}

fn read_labels(path: &Path, parts: &[String]) -> Result<Vec<LabelClass>, Failure> {
    let text = read_text(path)?;
    if is_ndjson(&text) {
        let records = import(text.as_bytes()).map_err(|e| runtime_err(format!("{}: {e}", path.display())))?;
        return Ok(select(records, parts).into_iter().filter_map(|r| r.label).collect());
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.parse()
                .map_err(|e| runtime_err(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn simulate(config: Config, path: &Path, export_to: Option<&Path>, store_path: Option<&Path>) -> Outcome {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let scenario = Scenario::parse(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let salt = match Salt::from_env() {
        Ok(s) => s,
        Err(_) => {
            info!("{SALT_ENV} not set; using a throwaway salt for this run");
            Salt::new(rand::random::<[u8; 32]>().to_vec()).expect("non-empty")
        }
    };
    let mut bot_config = service::bot_config(&config).map_err(config_err)?;
    bot_config.user = scenario.bot.clone();
    let classifier = service::build_classifier(&config).map_err(config_err)?;
    let store: Box<dyn AnnotationStore + Send> = match store_path {
        Some(p) => Box::new(SqliteStore::open(p).map_err(runtime_err)?),
        None => Box::new(MemoryStore::new()),
    };
    let mut bot = Bot::new(bot_config, store, classifier).map_err(runtime_err)?;
    let report = run_scenario(&scenario, &mut bot).map_err(runtime_err)?;
    print!("{}", report.render_diff());

    let snap = bot.store().snapshot().map_err(runtime_err)?;
    let opts = ExportOptions {
        salt,
        conflicts: config.dataset.conflicts,
        include_suggestions: config.dataset.include_suggestions,
        idle_window_ms: config.dataset.idle_window_ms(),
    };
    let (records, _) = export(&snap, &opts).map_err(runtime_err)?;
    let labeled = records.iter().filter(|r| r.label.is_some()).count();
    println!(
        "stored {} messages, {} annotations, {} labeled of {} sentences",
        snap.messages.iter().filter(|m| !m.redacted).count(),
        snap.annotations.len(),
        labeled,
        records.len()
    );
    for session in bot.engine().sessions() {
        println!("room {}: {:?}", session.room, session.state);
    }
    if let Some(p) = export_to {
        write_records(&records, Some(p))?;
    }
    let failures = check_expectations(&scenario.expect, &bot, &snap, &records);
    for f in &failures {
        println!("EXPECTATION FAILED: {f}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(runtime_err(format!("{} expectation(s) not met", failures.len())))
    }
}

fn serve(config: Config) -> Outcome {
    let salt = salt()?;
    let token = std::env::var(api::TOKEN_ENV).ok().filter(|t| !t.is_empty());
    if token.is_none() {
        warn!("{} not set; POST /annotations is disabled", api::TOKEN_ENV);
    }
    let bot_config = service::bot_config(&config).map_err(config_err)?;
    let classifier = service::build_classifier(&config).map_err(config_err)?;
    let matrix = match config.transport.kind {
        TransportKind::Matrix => {
            let mut m = MatrixConfig::from_env().map_err(config_err)?;
            m.sync_timeout_ms = config.transport.sync_timeout_ms;
            Some(m)
        }
        TransportKind::None => None,
    };
    let bind: std::net::SocketAddr = config
        .api
        .bind
        .parse()
        .map_err(|e| config_err(format!("api.bind {:?}: {e}", config.api.bind)))?;

    let store = SharedStore::new(SqliteStore::open(&config.store.path).map_err(runtime_err)?);
    let stop = Arc::new(AtomicBool::new(false));
    let (done_tx, done_rx) = tokio::sync::oneshot::channel::<Result<(), String>>();

    if let Some(matrix) = matrix {
        let mut bot = Bot::new(bot_config, store.clone(), classifier).map_err(runtime_err)?;
        let backoff = Backoff::from_config(&config.transport);
        let stop = stop.clone();
        std::thread::spawn(move || {
            let mut transport = MatrixTransport::new(matrix);
            let result = service::run_bot(&mut transport, &mut bot, &stop, backoff, std::thread::sleep);
            let _ = done_tx.send(result.map_err(|e| e.to_string()));
        });
    } else {
        drop(done_tx);
    }

    let runtime = tokio::runtime::Runtime::new().map_err(runtime_err)?;
    let outcome = runtime.block_on(async {
        let bot_done = async {
            match done_rx.await {
                Ok(result) => result,
                // no bot thread: only the API runs
                Err(_) => std::future::pending().await,
            }
        };
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            info!("shutdown requested");
        };
        if config.api.enabled {
            let listener = tokio::net::TcpListener::bind(bind)
                .await
                .map_err(|e| runtime_err(format!("bind {bind}: {e}")))?;
            info!("API listening on {bind}");
            let state = ApiState {
                store: store.clone(),
                salt,
                token,
                dashboard_user: config.api.dashboard_user.clone(),
                dataset: config.dataset.clone(),
                page_size: config.api.page_size,
                now: api::wall_clock,
            };
            let (stop_api, api_stopped) = tokio::sync::oneshot::channel::<()>();
            let server = tokio::spawn(api::serve(listener, state, async {
                let _ = api_stopped.await;
            }));
            let result = tokio::select! {
                r = bot_done => r.map_err(runtime_err),
                _ = shutdown => Ok(()),
            };
            let _ = stop_api.send(());
            let _ = server.await;
            result
        } else {
            tokio::select! {
                r = bot_done => r.map_err(runtime_err),
                _ = shutdown => Ok(()),
            }
        }
    });
    stop.store(true, Ordering::SeqCst);
    // Waits for the event being handled, then closes the database cleanly.
    store.close();
    if let Err(Failure::Runtime(m)) = &outcome {
        error!("{m}");
    }
    outcome
}
