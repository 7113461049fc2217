use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierError};
use crate::model::LabelClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub model_id: String,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            timeout_ms: 2000,
            max_in_flight: 4,
            model_id: "remote".into(),
        }
    }
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct PredictReply {
    label: String,
    score: f64,
}

/// Client for a classifier served over HTTP.
///
/// `POST {endpoint}` with `{"text": "..."}`; the reply must be
/// `{"label": "P"|"C"|"S"|"O", "score": <0..1>}`.
pub struct RemoteClassifier {
    config: RemoteConfig,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
}

impl RemoteClassifier {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            agent,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut n = self.in_flight.lock().expect("in-flight lock");
        while *n >= self.config.max_in_flight.max(1) {
            n = self.slot_freed.wait(n).expect("in-flight lock");
        }
        *n += 1;
    }

    fn release(&self) {
        *self.in_flight.lock().expect("in-flight lock") -= 1;
        self.slot_freed.notify_one();
    }

    pub fn remote_predict(&self, text: &str) -> Result<(LabelClass, f64), ClassifierError> {
        if text.trim().is_empty() {
            return Err(ClassifierError::EmptyText);
        }
        self.acquire();
        let result = self.call(text);
        self.release();
        result
    }

    fn call(&self, text: &str) -> Result<(LabelClass, f64), ClassifierError> {
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .send_json(PredictRequest { text })
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => ClassifierError::Timeout,
                other => ClassifierError::Transport(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ClassifierError::Status(status));
        }
        let body = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => ClassifierError::Timeout,
            other => ClassifierError::Transport(other.to_string()),
        })?;
        parse_reply(&body)
    }
}

fn parse_reply(body: &str) -> Result<(LabelClass, f64), ClassifierError> {
    let reply: PredictReply =
        serde_json::from_str(body).map_err(|e| ClassifierError::Schema(e.to_string()))?;
    let label = match reply.label.as_str() {
        "P" => LabelClass::Problem,
        "C" => LabelClass::Cause,
        "S" => LabelClass::Solution,
        "O" => LabelClass::Other,
        other => return Err(ClassifierError::Schema(format!("label `{other}`"))),
    };
    if !(0.0..=1.0).contains(&reply.score) {
        return Err(ClassifierError::Schema(format!("score {} outside [0, 1]", reply.score)));
    }
    Ok((label, reply.score))
}

impl Classifier for RemoteClassifier {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn predict(&self, text: &str) -> Result<(LabelClass, f64), ClassifierError> {
        self.remote_predict(text)
    }
}
