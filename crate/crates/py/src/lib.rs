//! Python bindings: segmentation, anonymization, the baseline classifier,
//! evaluation, dataset statistics and splits, and scenario simulation.
//!
//! Datasets cross the boundary as NDJSON text; reports come back as dicts.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use floorbot::bot::{Bot, BotConfig};
use floorbot::classifier::{self, BaselineModel as CoreModel};
use floorbot::dataset::{self, DatasetRecord, ExportOptions, Salt};
use floorbot::model::{LabelClass, UserId};
use floorbot::simulate::run_scenario;
use floorbot::store::{AnnotationStore, MemoryStore};
use floorbot::transport::Scenario;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(v).map_err(value_err)?)
}

fn label(code: &str) -> PyResult<LabelClass> {
    code.parse().map_err(value_err)
}

fn records(ndjson: &str) -> PyResult<Vec<DatasetRecord>> {
    dataset::import(ndjson.as_bytes()).map_err(value_err)
}

/// Splits a chat message into sentences.
#[pyfunction]
fn segment(text: &str) -> Vec<String> {
    floorbot::segment::segment(text)
}

/// Keyed pseudonym of a user id.
#[pyfunction]
fn anonymize(user: &str, salt: &str) -> PyResult<String> {
    let user = UserId::new(user).map_err(value_err)?;
    let salt = Salt::new(salt.as_bytes().to_vec()).map_err(value_err)?;
    Ok(dataset::anonymize(&user, &salt))
}

/// Naive Bayes sentence classifier over the P/C/S/O labels.
#[pyclass]
struct BaselineModel(CoreModel);

#[pymethods]
impl BaselineModel {
    /// Trains on `(text, label)` pairs; labels are codes or names.
    #[staticmethod]
    fn train(corpus: Vec<(String, String)>) -> PyResult<Self> {
        let corpus = corpus
            .into_iter()
            .map(|(t, l)| Ok((t, label(&l)?)))
            .collect::<PyResult<Vec<_>>>()?;
        CoreModel::train(&corpus).map(Self).map_err(value_err)
    }

    /// The model trained on the bundled seed corpus.
    #[staticmethod]
    fn seed() -> Self {
        Self(classifier::seed_model())
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CoreModel::from_json(text).map(Self).map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    /// Returns `(label_code, score)`.
    fn predict(&self, text: &str) -> PyResult<(String, f64)> {
        let (l, score) = self.0.predict(text).map_err(value_err)?;
        Ok((l.code().to_string(), score))
    }

    #[getter]
    fn model_id(&self) -> String {
        self.0.model_id.clone()
    }
}

/// Accuracy, macro-F1, per-class metrics and confusion matrix.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, preds: Vec<String>, golds: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    let preds = preds.iter().map(|p| label(p)).collect::<PyResult<Vec<_>>>()?;
    let golds = golds.iter().map(|g| label(g)).collect::<PyResult<Vec<_>>>()?;
    let report = classifier::evaluate(&preds, &golds).map_err(value_err)?;
    serialize(py, &report)
}

/// Dataset statistics of an NDJSON export, optionally for one part.
#[pyfunction]
#[pyo3(signature = (ndjson, part=None))]
fn stats<'py>(py: Python<'py>, ndjson: &str, part: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    serialize(py, &dataset::stats(&records(ndjson)?, part))
}

/// Tags dialogues with parts `P1..` by start time; returns part -> NDJSON.
#[pyfunction]
fn split<'py>(py: Python<'py>, ndjson: &str, boundaries: Vec<i64>) -> PyResult<Bound<'py, PyDict>> {
    if boundaries.windows(2).any(|w| w[0] > w[1]) {
        return Err(PyValueError::new_err("boundaries must be ascending"));
    }
    let out = PyDict::new(py);
    for p in dataset::temporal_split(&records(ndjson)?, &boundaries) {
        out.set_item(p.name, dataset::to_ndjson(&p.records))?;
    }
    Ok(out)
}

/// Runs a scenario (TOML) against a fresh bot with the seed model and
/// returns the anonymized export as NDJSON.
#[pyfunction]
fn simulate(scenario: &str, salt: &str) -> PyResult<String> {
    let scenario = Scenario::parse(scenario).map_err(value_err)?;
    let salt = Salt::new(salt.as_bytes().to_vec()).map_err(value_err)?;
    let config = BotConfig::new(scenario.bot.clone());
    let mut bot = Bot::new(config, MemoryStore::new(), Arc::new(classifier::seed_model())).map_err(value_err)?;
    run_scenario(&scenario, &mut bot).map_err(value_err)?;
    let snap = bot.store().snapshot().map_err(value_err)?;
    let (records, _) = dataset::export(&snap, &ExportOptions::new(salt)).map_err(value_err)?;
    Ok(dataset::to_ndjson(&records))
}

#[pymodule]
fn floorbot_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<BaselineModel>()?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(anonymize, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(stats, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
