//! Python bindings: the main operations (simulate, fit, evaluate, gof,
//! psrf, marginalize) exposed as functions over plain dicts and lists,
//! mirroring the JSON document shapes the CLI reads and writes.

use pyo3::exceptions::{PyRuntimeError, PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyNone, PyString, PyTuple};
use serde_json::Value;

use clonephy_core::inference::{self, FitReport};
use clonephy_core::model::{Hyperparameters, ReadCounts};
use clonephy_core::sampler::{self, Draw};
use clonephy_core::simulate::{self, GroundTruth, SimulationSpec};
use clonephy_core::Error;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::InvalidConfig(_) | Error::Dimension(_) => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn value_to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => PyNone::get(py).to_owned().into_any(),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(value_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, value_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn py_to_value(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    if obj.is_none() {
        return Ok(Value::Null);
    }
    if let Ok(b) = obj.cast::<PyBool>() {
        return Ok(Value::Bool(b.is_true()));
    }
    if let Ok(i) = obj.extract::<i64>() {
        return Ok(Value::from(i));
    }
    if let Ok(u) = obj.extract::<u64>() {
        return Ok(Value::from(u));
    }
    if let Ok(f) = obj.extract::<f64>() {
        return Ok(Value::from(f));
    }
    if let Ok(s) = obj.extract::<String>() {
        return Ok(Value::from(s));
    }
    if let Ok(list) = obj.cast::<PyList>() {
        let items = list.iter().map(|item| py_to_value(&item)).collect::<PyResult<Vec<_>>>()?;
        return Ok(Value::Array(items));
    }
    if let Ok(tuple) = obj.cast::<PyTuple>() {
        let items = tuple.iter().map(|item| py_to_value(&item)).collect::<PyResult<Vec<_>>>()?;
        return Ok(Value::Array(items));
    }
    if let Ok(dict) = obj.cast::<PyDict>() {
        let mut map = serde_json::Map::new();
        for (key, item) in dict.iter() {
            map.insert(key.extract::<String>()?, py_to_value(&item)?);
        }
        return Ok(Value::Object(map));
    }
    Err(PyTypeError::new_err(format!(
        "cannot convert {} to a document value",
        obj.get_type().name()?
    )))
}

fn serialize_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    value_to_py(py, &json)
}

fn deserialize_from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>, what: &str) -> PyResult<T> {
    let json = py_to_value(obj)?;
    serde_json::from_value(json).map_err(|e| PyValueError::new_err(format!("bad {what}: {e}")))
}

/// Generate a ground truth and read counts; returns (truth, counts) dicts.
#[pyfunction]
#[pyo3(signature = (c=3, k=50, samples=5, depth=200.0, depth_sd=None, v2=0.3, v3=0.3, seed=1, w_base=None, snv_only=false))]
#[allow(clippy::too_many_arguments)]
fn simulate_dataset<'py>(
    py: Python<'py>,
    c: usize,
    k: usize,
    samples: usize,
    depth: f64,
    depth_sd: Option<f64>,
    v2: f64,
    v3: f64,
    seed: u64,
    w_base: Option<Vec<f64>>,
    snv_only: bool,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let spec = SimulationSpec {
        c,
        n_pairs: k,
        n_samples: samples,
        depth_mean: depth,
        depth_sd,
        v2,
        v3,
        w_base,
        seed,
        ..SimulationSpec::default()
    };
    spec.validate().map_err(to_py_err)?;
    let truth = simulate::gen_truth(&spec).map_err(to_py_err)?;
    let mut counts = simulate::gen_counts(&truth, &spec).map_err(to_py_err)?;
    if snv_only {
        counts = simulate::marginalize_to_snv(&counts, false);
    }
    Ok((serialize_to_py(py, &truth)?, serialize_to_py(py, &counts)?))
}

/// Run the sampler on a counts dict; returns the fit report as a dict.
/// `config` may set any hyperparameter key; unset keys take their defaults.
/// With `include_draws`, the report carries the raw posterior draws under
/// "draws".
#[pyfunction]
#[pyo3(signature = (counts, config=None, seed=None, include_draws=false))]
fn fit_counts<'py>(
    py: Python<'py>,
    counts: &Bound<'py, PyAny>,
    config: Option<&Bound<'py, PyAny>>,
    seed: Option<u64>,
    include_draws: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let counts: ReadCounts = deserialize_from_py(counts, "counts")?;
    let mut hyper: Hyperparameters = match config {
        Some(cfg) => deserialize_from_py(cfg, "config")?,
        None => Hyperparameters::default(),
    };
    if let Some(seed) = seed {
        hyper.seed = seed;
    }
    hyper.validate().map_err(to_py_err)?;
    let output = sampler::run(&counts, &hyper).map_err(to_py_err)?;
    if output.draws.is_empty() {
        let dict = PyDict::new(py);
        dict.set_item("n_draws", 0)?;
        dict.set_item("config", serialize_to_py(py, &hyper)?)?;
        return Ok(dict.into_any());
    }
    let mut report = inference::summarize(&output).map_err(to_py_err)?;
    report.gof = Some(inference::gof_rb(&counts, &output.draws).map_err(to_py_err)?);
    let py_report = serialize_to_py(py, &report)?;
    if include_draws {
        let dict = py_report.cast::<PyDict>()?;
        dict.set_item("draws", serialize_to_py(py, &output.draws)?)?;
    }
    Ok(py_report)
}

/// Reconstruction error metrics of a report against a simulation truth.
#[pyfunction]
fn evaluate_fit<'py>(
    py: Python<'py>,
    truth: &Bound<'py, PyAny>,
    report: &Bound<'py, PyAny>,
) -> PyResult<Bound<'py, PyAny>> {
    let truth: GroundTruth = deserialize_from_py(truth, "truth")?;
    let report: FitReport = deserialize_from_py(report, "report")?;
    let metrics = inference::reconstruction_errors(&truth.tree, &truth.state, &report).map_err(to_py_err)?;
    serialize_to_py(py, &metrics)
}

/// Bayesian chi-squared goodness of fit from counts and posterior draws.
#[pyfunction]
fn gof<'py>(
    py: Python<'py>,
    counts: &Bound<'py, PyAny>,
    draws: &Bound<'py, PyAny>,
) -> PyResult<Bound<'py, PyAny>> {
    let counts: ReadCounts = deserialize_from_py(counts, "counts")?;
    let draws: Vec<Draw> = deserialize_from_py(draws, "draws")?;
    let report = inference::gof_rb(&counts, &draws).map_err(to_py_err)?;
    serialize_to_py(py, &report)
}

/// Potential scale reduction factor over two or more scalar traces.
#[pyfunction]
fn psrf(traces: Vec<Vec<f64>>) -> PyResult<f64> {
    inference::psrf(&traces).map_err(to_py_err)
}

/// Collapse pair counts to marginal-SNV counts.
#[pyfunction]
#[pyo3(signature = (counts, mirror_second_locus=false))]
fn marginalize_snv<'py>(
    py: Python<'py>,
    counts: &Bound<'py, PyAny>,
    mirror_second_locus: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let counts: ReadCounts = deserialize_from_py(counts, "counts")?;
    serialize_to_py(py, &simulate::marginalize_to_snv(&counts, mirror_second_locus))
}

#[pymodule]
fn clonephy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(simulate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(fit_counts, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_fit, m)?)?;
    m.add_function(wrap_pyfunction!(gof, m)?)?;
    m.add_function(wrap_pyfunction!(psrf, m)?)?;
    m.add_function(wrap_pyfunction!(marginalize_snv, m)?)?;
    Ok(())
}
