//! Service configuration: one TOML document, every value overridable by an
//! environment variable named `FLOORBOT_<SECTION>_<KEY>`, for example
//! `FLOORBOT_CONSENT_POLICY=unanimous` or `FLOORBOT_STORE_PATH=/data/bot.db`.
//!
//! Secrets never come from here. The anonymization salt, the API token and
//! the Matrix access token are read from their own variables, and a config
//! file that mentions them is rejected.

use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;
use toml::{Table, Value};

use crate::bot::ReactionAlphabet;
use crate::consent::ConsentConfig;
use crate::dataset::ConflictPolicy;
use crate::model::{Timestamp, UserId};

pub const ENV_PREFIX: &str = "FLOORBOT_";

/// Variables with the prefix that are not config overrides.
const RESERVED_ENV: &[&str] = &["FLOORBOT_SALT", "FLOORBOT_API_TOKEN", "FLOORBOT_LOG"];

const SECRET_KEYS: &[&str] = &["salt", "token", "access_token", "password", "api_token"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("environment override {var}: {message}")]
    Env { var: String, message: String },
    #[error("`{0}` must not appear in the config file; secrets are read from the environment")]
    Secret(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BotSection {
    pub user: UserId,
    /// Template file; the bundled texts are used when absent.
    pub templates: Option<PathBuf>,
    pub compact_on_redaction: bool,
}

impl Default for BotSection {
    fn default() -> Self {
        Self {
            user: UserId::new("@floorbot:localhost").expect("non-empty"),
            templates: None,
            compact_on_redaction: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Matrix,
    /// No chat connection; only the API runs.
    None,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSection {
    pub kind: TransportKind,
    pub sync_timeout_ms: u64,
    pub reconnect_initial_ms: u64,
    pub reconnect_max_ms: u64,
    pub reconnect_attempts: u32,
}

impl Default for TransportSection {
    fn default() -> Self {
        Self {
            kind: TransportKind::Matrix,
            sync_timeout_ms: 30_000,
            reconnect_initial_ms: 1_000,
            reconnect_max_ms: 60_000,
            reconnect_attempts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub idle_window_minutes: f64,
    pub conflicts: ConflictPolicy,
    pub include_suggestions: bool,
    /// Start times (ms) of parts 2, 3, ... used by the API's `part` filter.
    pub part_boundaries: Vec<Timestamp>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            idle_window_minutes: 30.0,
            conflicts: ConflictPolicy::LastWins,
            include_suggestions: false,
            part_boundaries: Vec::new(),
        }
    }
}

impl DatasetSection {
    pub fn idle_window_ms(&self) -> i64 {
        (self.idle_window_minutes * 60_000.0).round() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    #[default]
    Builtin,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub kind: ClassifierKind,
    /// Model file written by `train-baseline`; the bundled seed model when absent.
    pub model: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self { kind: ClassifierKind::Builtin, model: None, endpoint: None, timeout_ms: 2_000, max_in_flight: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSection {
    pub path: PathBuf,
}

impl Default for StoreSection {
    fn default() -> Self {
        Self { path: PathBuf::from("floorbot.db") }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiSection {
    pub enabled: bool,
    pub bind: String,
    /// Annotator recorded for corrections made through the API.
    pub dashboard_user: UserId,
    pub page_size: usize,
}

impl Default for ApiSection {
    fn default() -> Self {
        Self {
            enabled: true,
            bind: "127.0.0.1:8080".into(),
            dashboard_user: UserId::new("@dashboard:localhost").expect("non-empty"),
            page_size: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bot: BotSection,
    pub transport: TransportSection,
    pub consent: ConsentConfig,
    pub reactions: ReactionAlphabet,
    pub dataset: DatasetSection,
    pub classifier: ClassifierSection,
    pub store: StoreSection,
    pub api: ApiSection,
}

const SECTIONS: &[&str] = &["bot", "transport", "consent", "reactions", "dataset", "classifier", "store", "api"];

fn find_secret(table: &Table, path: &str) -> Option<String> {
    for (k, v) in table {
        let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        if SECRET_KEYS.contains(&k.as_str()) {
            return Some(here);
        }
        if let Value::Table(t) = v {
            if let Some(found) = find_secret(t, &here) {
                return Some(found);
            }
        }
    }
    None
}

/// Reads an override value as a TOML literal when it is one (numbers,
/// booleans, arrays) and as a plain string otherwise.
fn env_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

impl Config {
    /// Builds the config from optional file text and `(name, value)` pairs
    /// of the environment.
    pub fn from_sources(
        text: Option<&str>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut table: Table = match text {
            Some(t) => t.parse()?,
            None => Table::new(),
        };
        if let Some(key) = find_secret(&table, "") {
            return Err(ConfigError::Secret(key));
        }
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && !RESERVED_ENV.contains(&k.as_str()))
            .collect();
        overrides.sort();
        for (var, raw) in overrides {
            let rest = var[ENV_PREFIX.len()..].to_ascii_lowercase();
            let Some((section, key)) = rest.split_once('_') else { continue };
            if !SECTIONS.contains(&section) {
                continue;
            }
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            let Value::Table(section_table) = entry else {
                return Err(ConfigError::Env { var, message: format!("`{section}` is not a table") });
            };
            section_table.insert(key.to_string(), env_value(&raw));
        }
        let config: Config = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Invalid(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` (if any) and the process environment.
    pub fn load(path: Option<&std::path::Path>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.into(), source })?),
            None => None,
        };
        Self::from_sources(text.as_deref(), std::env::vars())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.reactions.validate().map_err(ConfigError::Invalid)?;
        if !(self.dataset.idle_window_minutes > 0.0) {
            return Err(ConfigError::Invalid("dataset.idle_window_minutes must be positive".into()));
        }
        if !self.dataset.part_boundaries.windows(2).all(|w| w[0] < w[1]) {
            return Err(ConfigError::Invalid("dataset.part_boundaries must be strictly ascending".into()));
        }
        if self.classifier.kind == ClassifierKind::Remote && self.classifier.endpoint.is_none() {
            return Err(ConfigError::Invalid("classifier.kind = \"remote\" needs classifier.endpoint".into()));
        }
        if self.classifier.max_in_flight == 0 {
            return Err(ConfigError::Invalid("classifier.max_in_flight must be at least 1".into()));
        }
        if self.api.page_size == 0 {
            return Err(ConfigError::Invalid("api.page_size must be at least 1".into()));
        }
        if self.transport.reconnect_initial_ms == 0 || self.transport.reconnect_max_ms < self.transport.reconnect_initial_ms {
            return Err(ConfigError::Invalid("transport reconnect delays must satisfy 0 < initial <= max".into()));
        }
        Ok(())
    }
}
