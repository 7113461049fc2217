//! Wiring from [`Config`] to a running bot, and the event loop.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use log::{error, info, warn};

use crate::bot::{Bot, BotConfig, BotError, Templates};
use crate::classifier::{seed_model, BaselineModel, Classifier, RemoteClassifier, RemoteConfig};
use crate::config::{ClassifierKind, Config, ConfigError, TransportSection};
use crate::store::AnnotationStore;
use crate::transport::{Transport, TransportError};

pub fn load_templates(path: Option<&Path>) -> Result<Templates, ConfigError> {
    match path {
        None => Ok(Templates::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.into(), source })?;
            Templates::parse(&text).map_err(|e| ConfigError::Invalid(format!("{}: {}", p.display(), e.message())))
        }
    }
}

pub fn bot_config(config: &Config) -> Result<BotConfig, ConfigError> {
    Ok(BotConfig {
        user: config.bot.user.clone(),
        consent: config.consent,
        reactions: config.reactions.clone(),
        templates: load_templates(config.bot.templates.as_deref())?,
        compact_on_redaction: config.bot.compact_on_redaction,
    })
}

pub fn load_model(path: &Path) -> Result<BaselineModel, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
    BaselineModel::from_json(&text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))
}

pub fn build_classifier(config: &Config) -> Result<Arc<dyn Classifier>, ConfigError> {
    let c = &config.classifier;
    Ok(match c.kind {
        ClassifierKind::Builtin => match &c.model {
            Some(path) => Arc::new(load_model(path)?),
            None => Arc::new(seed_model()),
        },
        ClassifierKind::Remote => Arc::new(RemoteClassifier::new(RemoteConfig {
            endpoint: c.endpoint.clone().expect("validated"),
            timeout_ms: c.timeout_ms,
            max_in_flight: c.max_in_flight,
            ..RemoteConfig::default()
        })),
    })
}

/// Delays between reconnect attempts: doubling from `initial`, capped at
/// `max`, giving up after `attempts` consecutive failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub initial: Duration,
    pub max: Duration,
    pub attempts: u32,
}

impl Backoff {
    pub fn from_config(t: &TransportSection) -> Self {
        Self {
            initial: Duration::from_millis(t.reconnect_initial_ms),
            max: Duration::from_millis(t.reconnect_max_ms),
            attempts: t.reconnect_attempts,
        }
    }

    /// Delay before retry number `n` (0-based), or `None` once exhausted.
    pub fn delay(&self, n: u32) -> Option<Duration> {
        (n < self.attempts).then(|| self.initial.saturating_mul(2u32.saturating_pow(n)).min(self.max))
    }
}

/// Processes events until the stream ends, `stop` is set, or the
/// transport stays unreachable past the backoff budget.
///
/// Store failures end the loop; a command the server refuses is logged
/// and the loop continues with the next event.
pub fn run_bot<T: Transport, S: AnnotationStore>(
    transport: &mut T,
    bot: &mut Bot<S>,
    stop: &AtomicBool,
    backoff: Backoff,
    sleep: impl Fn(Duration),
) -> Result<(), BotError> {
    let mut failures = 0;
    while !stop.load(Ordering::SeqCst) {
        let err = match transport.next_event() {
            Ok(None) => return Ok(()),
            Ok(Some(env)) => {
                failures = 0;
                match bot.handle(&env, transport) {
                    Ok(()) => continue,
                    Err(BotError::Transport(TransportError::Terminal(e))) => {
                        warn!("server refused a command: {e}");
                        continue;
                    }
                    Err(BotError::Transport(e)) => e,
                    Err(e) => return Err(e),
                }
            }
            Err(e @ TransportError::Terminal(_)) => return Err(e.into()),
            Err(e) => e,
        };
        let Some(delay) = backoff.delay(failures) else {
            error!("giving up after {failures} reconnect attempts");
            return Err(err.into());
        };
        warn!("{err}; retrying in {delay:?}");
        failures += 1;
        sleep(delay);
    }
    info!("event loop stopped");
    Ok(())
}
