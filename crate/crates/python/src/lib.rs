//! Python bindings: configuration, the train/evaluate/predict pipeline,
//! synthetic data, and the standalone metrics.

use std::collections::HashMap;
use std::path::PathBuf;

use gdsrec::cli::{self, CliError, LoadedRun};
use gdsrec::config::RunConfig as CoreConfig;
use gdsrec::eval::{self, EvalReport};
use gdsrec::social_graph;
use gdsrec::synth::SynthConfig;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: CliError) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        2 => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("task", r.task.to_string())?;
    d.set_item("n_examples", r.n_examples)?;
    d.set_item("mae", r.mae)?;
    d.set_item("rmse", r.rmse)?;
    d.set_item("auc", r.auc)?;
    d.set_item("cold_user_count", r.cold_user_count)?;
    d.set_item("cold_item_count", r.cold_item_count)?;
    Ok(d)
}

/// Flat run configuration; keys are the same as in config files.
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (**settings))]
    fn new(settings: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = CoreConfig::default();
        if let Some(settings) = settings {
            for (k, v) in settings.iter() {
                inner.set(&k.extract::<String>()?, &v.str()?.to_string()).map_err(value_err)?;
            }
        }
        Ok(PyRunConfig { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyRunConfig {
            inner: CoreConfig::load(&path).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyRunConfig {
            inner: CoreConfig::parse(text).map_err(value_err)?,
        })
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        self.inner.set(key, &value.str()?.to_string()).map_err(value_err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(out_dir={:?})", self.inner.out_dir)
    }
}

/// A trained run reloaded from its output directory.
#[pyclass(name = "TrainedModel")]
struct PyTrainedModel {
    loaded: LoadedRun,
}

#[pymethods]
impl PyTrainedModel {
    #[staticmethod]
    #[pyo3(signature = (run_dir, overrides = None))]
    fn load(run_dir: PathBuf, overrides: Option<HashMap<String, String>>) -> PyResult<Self> {
        let overrides: Vec<_> = overrides.unwrap_or_default().into_iter().collect();
        Ok(PyTrainedModel {
            loaded: cli::load_run(&run_dir, &overrides).map_err(to_py)?,
        })
    }

    /// `(rating, probability)`; probability is `None` for rating runs.
    fn predict(&self, user: &str, item: &str) -> PyResult<(f64, Option<f64>)> {
        let p = cli::predict_pair(&self.loaded, user, item).map_err(to_py)?;
        Ok((p.rating, p.probability))
    }

    fn evaluate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let run = &self.loaded.run;
        let report = eval::evaluate(
            &self.loaded.model,
            &run.ctx,
            &run.splits.test,
            run.config.train.task,
            run.config.train.threshold,
        )
        .map_err(|e| to_py(e.into()))?;
        report_dict(py, &report)
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.loaded.run.num_users()
    }

    #[getter]
    fn num_items(&self) -> usize {
        self.loaded.run.num_items()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.loaded.model.store.num_scalars()
    }
}

/// Trains and writes the run directory; returns `(report, epoch_log)`.
#[pyfunction]
fn train<'py>(py: Python<'py>, config: &PyRunConfig) -> PyResult<(Bound<'py, PyDict>, Vec<String>)> {
    let cfg = config.inner.clone();
    let mut log = Vec::new();
    let outcome = py
        .detach(|| cli::cmd_train(&cfg, |rec| log.push(rec.log_line())))
        .map_err(to_py)?;
    Ok((report_dict(py, &outcome.report)?, log))
}

#[pyfunction]
#[pyo3(signature = (run_dir, overrides = None))]
fn evaluate<'py>(
    py: Python<'py>,
    run_dir: PathBuf,
    overrides: Option<HashMap<String, String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let overrides: Vec<_> = overrides.unwrap_or_default().into_iter().collect();
    let report = py
        .detach(|| cli::cmd_evaluate(&run_dir, &overrides))
        .map_err(to_py)?;
    report_dict(py, &report)
}

#[pyfunction]
fn stats(config: &PyRunConfig) -> PyResult<String> {
    Ok(cli::cmd_stats(&config.inner, None).map_err(to_py)?.to_string())
}

/// Writes `ratings.txt` and `trust.txt`; returns `(n_ratings, n_trust)`.
#[pyfunction]
#[pyo3(signature = (n_users, n_items, n_ratings, n_trust, out_dir, seed = 0, communities = None))]
fn synth(
    n_users: usize,
    n_items: usize,
    n_ratings: usize,
    n_trust: usize,
    out_dir: PathBuf,
    seed: u64,
    communities: Option<usize>,
) -> PyResult<(usize, usize)> {
    let mut cfg = SynthConfig::new(n_users, n_items, n_ratings, n_trust, seed);
    if let Some(c) = communities {
        cfg.communities = c;
    }
    let data = cli::cmd_synth(&cfg, &out_dir).map_err(to_py)?;
    Ok((data.ratings.len(), data.trust.len()))
}

#[pyfunction]
fn rmse(preds: Vec<f64>, targets: Vec<f64>) -> PyResult<f64> {
    eval::rmse(&preds, &targets).map_err(value_err)
}

#[pyfunction]
fn mae(preds: Vec<f64>, targets: Vec<f64>) -> PyResult<f64> {
    eval::mae(&preds, &targets).map_err(value_err)
}

#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    eval::auc(&scores, &labels).map_err(value_err)
}

/// `T` between two users given `{item: rating}` maps.
#[pyfunction]
#[pyo3(signature = (ratings_a, ratings_b, delta = social_graph::DEFAULT_DELTA))]
fn relationship_coefficient(
    ratings_a: HashMap<usize, f64>,
    ratings_b: HashMap<usize, f64>,
    delta: f64,
) -> u32 {
    social_graph::relationship_coefficient(&ratings_a, &ratings_b, delta)
}

#[pymodule]
fn gdsrec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyTrainedModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(stats, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(relationship_coefficient, m)?)?;
    m.add("CONFIG_KEYS", gdsrec::config::KEYS.to_vec())?;
    Ok(())
}
