//! Python bindings for the `dvfsim` simulator. Everything crosses the
//! boundary as JSON strings.

use dvfsim::experiments::{self, acceptance};
use dvfsim::powermodel::CalibrationProfile;
use dvfsim::sim::{self, Scenario};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn profile_from(json: Option<&str>) -> PyResult<CalibrationProfile> {
    match json {
        Some(s) => CalibrationProfile::from_json(s).map_err(value_err),
        None => Ok(CalibrationProfile::default()),
    }
}

/// The shipped calibration profile as JSON.
#[pyfunction]
fn default_profile() -> String {
    CalibrationProfile::default().to_json()
}

#[pyfunction]
fn preset_names() -> Vec<String> {
    experiments::preset_names().iter().map(|s| s.to_string()).collect()
}

#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    experiments::preset(name).map(|s| s.to_json()).map_err(value_err)
}

/// Runs a scenario and returns the report JSON.
#[pyfunction]
#[pyo3(signature = (scenario, profile=None))]
fn run(py: Python<'_>, scenario: &str, profile: Option<&str>) -> PyResult<String> {
    let p = profile_from(profile)?;
    let sc = Scenario::from_json(scenario).map_err(value_err)?;
    let (_, report) = py.detach(|| sim::run(&sc, &p)).map_err(value_err)?;
    serde_json::to_string(&report).map_err(value_err)
}

/// Headline metrics used by the fitting script.
#[pyfunction]
#[pyo3(signature = (profile=None))]
fn metrics(py: Python<'_>, profile: Option<&str>) -> PyResult<String> {
    let p = profile_from(profile)?;
    let m = py.detach(|| acceptance::metrics(&p)).map_err(value_err)?;
    serde_json::to_string(&m).map_err(value_err)
}

/// Every acceptance criterion as a JSON list.
#[pyfunction]
#[pyo3(signature = (profile=None))]
fn selftest(py: Python<'_>, profile: Option<&str>) -> PyResult<String> {
    let p = profile_from(profile)?;
    let results = py.detach(|| acceptance::run_all(&p));
    serde_json::to_string(&results).map_err(value_err)
}

#[pymodule]
fn dvfsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_profile, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
