//! Python bindings: beta regression with varying dispersion.
//!
//! The module mirrors the command-line surface. `Dataset` wraps the
//! validated data table, `fit` returns a `Fit` handle with estimate
//! accessors plus `diagnose()` / `press_plot()` methods, and
//! `simulate` runs a Monte Carlo experiment cell. Report-shaped
//! results arrive as plain dictionaries with the same keys as the CLI
//! JSON payloads, so the two front ends are interchangeable.

use betapress_core::config::ModelConfig;
use betapress_core::data::Dataset as CoreDataset;
use betapress_core::diagnostics::{press_plot_data, DiagnosticsReport};
use betapress_core::estimation::{fit as core_fit, FitResult};
use betapress_core::simulation::{build_scenario, run_monte_carlo, scenario_ids, DispersionLevel};
use betapress_core::Error as CoreError;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

/// Map library errors onto Python exception types by their nature:
/// specification and data-content problems become ValueError, file
/// access problems IOError, numerical failures RuntimeError.
fn to_py_err(error: CoreError) -> PyErr {
    let message = format!("{error} [{}]", error.kind());
    match &error {
        CoreError::Io(_) | CoreError::Csv(_) => PyIOError::new_err(message),
        _ if error.exit_code() == 4 => PyRuntimeError::new_err(message),
        _ => PyValueError::new_err(message),
    }
}

/// Convert a JSON value into the matching Python object. Report
/// structs are serialized once and crossed over wholesale, keeping
/// the Python payloads byte-for-byte consistent with the CLI.
fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(num) => {
            if let Some(i) = num.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                num.as_f64()
                    .expect("JSON number is i64 or f64")
                    .into_pyobject(py)?
                    .into_any()
            }
        }
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_value(value)
        .map_err(|e| PyRuntimeError::new_err(format!("serialization failed: {e}")))?;
    json_to_py(py, &json)
}

/// Validated data table: a response in (0, 1) plus named covariates.
#[pyclass(module = "betapress", frozen)]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    /// Build a dataset from a response vector and covariate columns.
    #[new]
    #[pyo3(signature = (response, columns, response_name = "y".to_string()))]
    fn new(
        response: Vec<f64>,
        columns: Vec<(String, Vec<f64>)>,
        response_name: String,
    ) -> PyResult<Self> {
        let inner = CoreDataset::new(response_name, response, columns).map_err(to_py_err)?;
        Ok(Dataset { inner })
    }

    /// Read a CSV file with a header row, taking `response` as the
    /// response column and every other column as a covariate.
    #[staticmethod]
    fn read_csv(path: String, response: String) -> PyResult<Self> {
        let inner = CoreDataset::from_csv_path(&path, &response).map_err(to_py_err)?;
        Ok(Dataset { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn response_name(&self) -> String {
        self.inner.response_name().to_string()
    }

    #[getter]
    fn response(&self) -> Vec<f64> {
        self.inner.response().to_vec()
    }

    #[getter]
    fn column_names(&self) -> Vec<String> {
        self.inner
            .column_names()
            .into_iter()
            .map(str::to_string)
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, response='{}', columns={:?})",
            self.inner.n(),
            self.inner.response_name(),
            self.inner.column_names()
        )
    }
}

/// A maximum-likelihood fit: estimate accessors plus diagnostics.
#[pyclass(module = "betapress", frozen)]
struct Fit {
    result: FitResult,
    data: CoreDataset,
}

#[pymethods]
impl Fit {
    #[getter]
    fn converged(&self) -> bool {
        self.result.converged()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.result.iterations()
    }

    #[getter]
    fn log_lik(&self) -> f64 {
        self.result.log_lik()
    }

    #[getter]
    fn score_norm(&self) -> f64 {
        self.result.score_norm()
    }

    #[getter]
    fn n(&self) -> usize {
        self.result.n()
    }

    #[getter]
    fn beta_hat(&self) -> Vec<f64> {
        self.result.beta_hat().iter().copied().collect()
    }

    #[getter]
    fn gamma_hat(&self) -> Vec<f64> {
        self.result.gamma_hat().iter().copied().collect()
    }

    #[getter]
    fn mu_hat(&self) -> Vec<f64> {
        self.result.mu_hat().iter().copied().collect()
    }

    #[getter]
    fn phi_hat(&self) -> Vec<f64> {
        self.result.phi_hat().iter().copied().collect()
    }

    /// Fit summary with the same keys as the CLI `fit` payload.
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serialize_to_py(py, &self.result.report())
    }

    /// Residuals, leverage, PRESS, and the model-selection statistic
    /// family, keyed like the CLI `diagnose` payload. Fits the
    /// intercept-only reference model internally.
    fn diagnose<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let null_model = self.result.model().null_spec();
        let null_fit =
            core_fit(&null_model, &self.data, &Default::default()).map_err(to_py_err)?;
        let report = DiagnosticsReport::compute(&self.result, &null_fit).map_err(to_py_err)?;
        serialize_to_py(py, &report)
    }

    /// Combined-PRESS components with the influence threshold, one
    /// dict per observation: keys t, component, threshold, flagged.
    fn press_plot<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let rows = press_plot_data(&self.result).map_err(to_py_err)?;
        serialize_to_py(py, &rows)
    }

    fn __repr__(&self) -> String {
        format!(
            "Fit(converged={}, iterations={}, log_lik={:.6})",
            self.result.converged(),
            self.result.iterations(),
            self.result.log_lik()
        )
    }
}

/// Estimate a beta regression by maximum likelihood.
#[pyfunction]
#[pyo3(signature = (
    data,
    mean,
    mean_link = "logit".to_string(),
    precision = "g1".to_string(),
    precision_link = "log".to_string(),
    mean_start = None,
    precision_start = None,
    max_iterations = None,
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    data: &Dataset,
    mean: String,
    mean_link: String,
    precision: String,
    precision_link: String,
    mean_start: Option<Vec<f64>>,
    precision_start: Option<Vec<f64>>,
    max_iterations: Option<usize>,
) -> PyResult<Fit> {
    let mut config = ModelConfig::with_mean(mean);
    config.mean_link = mean_link;
    config.precision = precision;
    config.precision_link = precision_link;
    config.mean_start = mean_start;
    config.precision_start = precision_start;
    config.max_iterations = max_iterations;
    let (model, options) = config.resolve(&data.inner).map_err(to_py_err)?;
    let result = core_fit(&model, &data.inner, &options).map_err(to_py_err)?;
    Ok(Fit {
        result,
        data: data.inner.clone(),
    })
}

/// Load a model configuration file (TOML or JSON by extension) and
/// fit it to the data.
#[pyfunction]
fn fit_config(data: &Dataset, path: String) -> PyResult<Fit> {
    let config = ModelConfig::from_path(&path).map_err(to_py_err)?;
    let (model, options) = config.resolve(&data.inner).map_err(to_py_err)?;
    let result = core_fit(&model, &data.inner, &options).map_err(to_py_err)?;
    Ok(Fit {
        result,
        data: data.inner.clone(),
    })
}

/// Run one Monte Carlo experiment cell from the scenario catalog.
/// Pass exactly one of `phi` (constant-precision scenarios) or `lam`
/// (varying-dispersion scenarios). Returns the summary dict; with
/// `include_rows=True` it gains a `"rows"` list with one entry per
/// replication.
#[pyfunction]
#[pyo3(signature = (scenario, n, seed, phi = None, lam = None, reps = 1000, include_rows = false))]
fn simulate<'py>(
    py: Python<'py>,
    scenario: String,
    n: usize,
    seed: u64,
    phi: Option<f64>,
    lam: Option<f64>,
    reps: usize,
    include_rows: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let level = match (phi, lam) {
        (Some(phi), None) => DispersionLevel::Phi(phi),
        (None, Some(lam)) => DispersionLevel::Lambda(lam),
        _ => {
            return Err(PyValueError::new_err(
                "pass exactly one of phi= or lam=",
            ))
        }
    };
    let spec = build_scenario(&scenario).map_err(to_py_err)?;
    let summary = py
        .detach(|| run_monte_carlo(&spec, n, &level, reps, seed))
        .map_err(to_py_err)?;
    let payload = serialize_to_py(py, &summary)?;
    if include_rows {
        let dict = payload.cast::<PyDict>()?;
        dict.set_item("rows", serialize_to_py(py, &summary.rows())?)?;
    }
    Ok(payload)
}

/// Scenario identifiers accepted by `simulate`.
#[pyfunction]
fn scenarios() -> Vec<String> {
    scenario_ids().iter().map(|s| s.to_string()).collect()
}

#[pymodule]
fn betapress(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Fit>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(scenarios, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
