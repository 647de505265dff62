//! Python bindings. Configs and results cross the boundary as JSON strings
//! with the same schema the CLI and HTTP service use.

use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use hilfe_core::dataset::{load_table, SchemaHint};
use hilfe_core::dsl;
use hilfe_core::engine::synthetic::{run_synthetic as run_synthetic_core, SyntheticConfig};
use hilfe_core::engine::{self, Session, SessionConfig};
use hilfe_core::surrogate;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json(value: &impl serde::Serialize) -> PyResult<String> {
    serde_json::to_string(value).map_err(value_err)
}

/// Canonical text of an expression.
#[pyfunction]
fn canonical(text: &str) -> PyResult<String> {
    Ok(dsl::parse(text).map_err(value_err)?.to_string())
}

#[pyfunction]
fn columns_used(text: &str) -> PyResult<Vec<String>> {
    let expr = dsl::parse(text).map_err(value_err)?;
    Ok(dsl::columns_used(&expr).into_iter().collect())
}

/// Evaluates an expression over a CSV table.
#[pyfunction]
#[pyo3(signature = (text, csv_path, target=None))]
fn evaluate(text: &str, csv_path: &str, target: Option<String>) -> PyResult<Vec<f64>> {
    let expr = dsl::parse(text).map_err(value_err)?;
    let hint = SchemaHint {
        target,
        task: None,
        metadata: String::new(),
    };
    let table = load_table(Path::new(csv_path), Some(&hint)).map_err(value_err)?;
    Ok(dsl::evaluate(&expr, &table).map_err(value_err)?.values)
}

#[pyfunction]
fn beta(t: usize, pool_size: usize, delta: f64) -> f64 {
    surrogate::beta(t, pool_size, delta)
}

/// Runs a session to completion; returns the summary as JSON.
#[pyfunction]
fn run_session(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let config: SessionConfig = serde_json::from_str(config_json).map_err(value_err)?;
    let summary = py
        .detach(|| Session::from_config(config).and_then(|mut s| s.run()))
        .map_err(value_err)?;
    to_json(&summary)
}

/// Runs the synthetic harness; returns the per-round results as JSON.
#[pyfunction]
fn run_synthetic(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let config: SyntheticConfig = serde_json::from_str(config_json).map_err(value_err)?;
    let run = py.detach(|| run_synthetic_core(&config)).map_err(value_err)?;
    to_json(&run)
}

/// Round records of a session directory as a JSON array.
#[pyfunction]
fn read_round_log(dir: &str) -> PyResult<String> {
    let records = engine::read_round_log(&Path::new(dir).join("rounds.jsonl"))
        .map_err(|e| PyIOError::new_err(e.to_string()))?;
    to_json(&records)
}

#[pyfunction]
fn replay_hash(dir: &str) -> PyResult<String> {
    engine::replay_hash(Path::new(dir)).map_err(|e| PyIOError::new_err(e.to_string()))
}

#[pymodule]
fn hilfe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(canonical, m)?)?;
    m.add_function(wrap_pyfunction!(columns_used, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    m.add_function(wrap_pyfunction!(run_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(read_round_log, m)?)?;
    m.add_function(wrap_pyfunction!(replay_hash, m)?)?;
    Ok(())
}
