//! Python bindings: scenario construction, solver runs, and sweeps.
//!
//! The module mirrors the CLI surface rather than the full Rust API —
//! build a scenario, run one solver variant, or sweep SINR targets,
//! getting plain lists and floats back. Infeasibility is reported as a
//! result status, not an exception, so sweep-style scripts can record it.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use ris_uplink::driver::{papa_run, sweep_sinr, RunConfig};
use ris_uplink::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Network description: dimensions, targets, noise, geometry, seed.
#[pyclass(name = "Scenario")]
#[derive(Clone)]
struct PyScenario {
    inner: ris_uplink::scenario::Scenario,
}

#[pymethods]
impl PyScenario {
    /// The stock ten-user experiment layout.
    #[staticmethod]
    fn default() -> Self {
        Self { inner: ris_uplink::scenario::default_scenario() }
    }

    /// Parse a `key = value` configuration document.
    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        ris_uplink::scenario::Scenario::from_config_str(text)
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    /// Load a configuration file.
    #[staticmethod]
    fn from_config_file(path: &str) -> PyResult<Self> {
        ris_uplink::scenario::Scenario::from_config_file(path)
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users
    }

    #[getter]
    fn n_bs_antennas(&self) -> usize {
        self.inner.n_bs_antennas
    }

    #[getter]
    fn n_ris_elements(&self) -> usize {
        self.inner.n_ris_elements
    }

    #[getter]
    fn sinr_targets(&self) -> Vec<f64> {
        self.inner.sinr_targets.clone()
    }

    #[getter]
    fn noise_power(&self) -> f64 {
        self.inner.noise_power
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    /// Give every user the same linear SINR target.
    fn set_common_target(&mut self, target_linear: f64) {
        self.inner.set_common_target(target_linear);
    }

    /// Give every user the same SINR target, in dB.
    fn set_common_target_db(&mut self, target_db: f64) {
        self.inner.set_common_target(10f64.powf(target_db / 10.0));
    }

    /// Serialize back to the configuration format.
    fn to_config(&self) -> PyResult<String> {
        self.inner.to_config_string().map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(n_users={}, n_bs_antennas={}, n_ris_elements={}, seed={})",
            self.inner.n_users, self.inner.n_bs_antennas, self.inner.n_ris_elements,
            self.inner.seed
        )
    }
}

/// Outcome of one solver run.
#[pyclass(name = "RunResult")]
struct PyRunResult {
    /// `"ok"` or `"infeasible"`.
    #[pyo3(get)]
    status: String,
    /// Total power after each completed outer iteration.
    #[pyo3(get)]
    totals: Vec<f64>,
    /// Per-user powers at the last completed iteration.
    #[pyo3(get)]
    powers: Vec<f64>,
    /// Worst achieved-over-target SINR ratio at the last iteration.
    #[pyo3(get)]
    min_sinr_ratio: Option<f64>,
    /// Variant that produced this result, e.g. `papa_personal`.
    #[pyo3(get)]
    variant: String,
}

#[pymethods]
impl PyRunResult {
    /// Total power at the final iteration, or None if none completed.
    #[getter]
    fn final_total_power(&self) -> Option<f64> {
        self.totals.last().copied()
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(variant={}, status={}, final_total_power={:?})",
            self.variant,
            self.status,
            self.totals.last()
        )
    }
}

fn build_config(
    scenario: &PyScenario,
    model: &str,
    baseline: &str,
    outer_iters: usize,
    accelerated: bool,
) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::new(scenario.inner.clone());
    cfg.model = model.parse().map_err(to_py_err)?;
    cfg.baseline = baseline.parse().map_err(to_py_err)?;
    cfg.outer_iters = outer_iters;
    cfg.accelerated = accelerated;
    Ok(cfg)
}

/// Run one solver variant and return its convergence record.
#[pyfunction]
#[pyo3(signature = (scenario, model = "personal", baseline = "none", outer_iters = 50, accelerated = true))]
fn run(
    scenario: &PyScenario,
    model: &str,
    baseline: &str,
    outer_iters: usize,
    accelerated: bool,
) -> PyResult<PyRunResult> {
    let cfg = build_config(scenario, model, baseline, outer_iters, accelerated)?;
    let variant = cfg.variant_label().to_string();
    match papa_run(&cfg) {
        Ok(outcome) => Ok(PyRunResult {
            status: "ok".into(),
            totals: outcome.trace.rows.iter().map(|r| r.total_power).collect(),
            powers: outcome.trace.rows.last().map(|r| r.powers.clone()).unwrap_or_default(),
            min_sinr_ratio: outcome.trace.rows.last().map(|r| r.min_sinr_ratio),
            variant,
        }),
        Err(Error::Infeasible { trace, .. }) => Ok(PyRunResult {
            status: "infeasible".into(),
            totals: trace.rows.iter().map(|r| r.total_power).collect(),
            powers: trace.rows.last().map(|r| r.powers.clone()).unwrap_or_default(),
            min_sinr_ratio: trace.rows.last().map(|r| r.min_sinr_ratio),
            variant,
        }),
        Err(e) => Err(to_py_err(e)),
    }
}

/// Final total power per (target_db, variant); infeasible cells carry
/// None. Returns a list of (target_db, variant, total_power) tuples in
/// ascending target order.
#[pyfunction]
fn sweep(scenario: &PyScenario, targets_db: Vec<f64>) -> PyResult<Vec<(f64, String, Option<f64>)>> {
    let cfg = RunConfig::new(scenario.inner.clone());
    let table = sweep_sinr(&cfg, &targets_db).map_err(to_py_err)?;
    Ok(table
        .cells
        .into_iter()
        .map(|c| (c.target_db, c.variant.to_string(), c.total_power))
        .collect())
}

#[pymodule]
fn ris_uplink_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
