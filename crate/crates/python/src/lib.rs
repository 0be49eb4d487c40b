//! Python bindings: models, dual tables, Gaussian moments and both filters.
//!
//! Long-running work (path simulation, filtering) releases the GIL.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dukf_core::dual::{self, Caps, TableBuild};
use dukf_core::filters::{DukfConfig, EnkfConfig, FilterOutput};
use dukf_core::harness::{self, ExperimentConfig};
use dukf_core::{
    run_filter, stream_rng, Error, FilterKind, FilterSetup, GaussianBelief, MeasurementModel,
    MeasurementSeries, MomentEstimate, PolynomialSdeModel,
};

create_exception!(
    dukf,
    NumericalError,
    PyRuntimeError,
    "A computation blew up or produced an unusable estimate."
);

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn belief(mean: [f64; 2], cov: [[f64; 2]; 2]) -> PyResult<GaussianBelief> {
    GaussianBelief::new(mean, cov).map_err(to_py)
}

fn series(times: Vec<f64>, values: Vec<f64>) -> PyResult<MeasurementSeries> {
    MeasurementSeries::new(times, values).map_err(to_py)
}

/// Polynomial-drift SDE with constant diagonal diffusion.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: PolynomialSdeModel,
}

#[pymethods]
impl PyModel {
    /// Van der Pol oscillator `dx1 = x2 dt`, `dx2 = (eps (1 - x1^2) x2 - x1) dt`.
    #[staticmethod]
    #[pyo3(signature = (epsilon = 1.0, q11 = 0.0262, q22 = 0.008))]
    fn van_der_pol(epsilon: f64, q11: f64, q22: f64) -> PyResult<Self> {
        Ok(Self {
            inner: PolynomialSdeModel::van_der_pol(epsilon, q11, q22).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn drift(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.drift_eval(&x).map_err(to_py)
    }

    /// Euler–Maruyama path; returns `(times, states)`.
    fn simulate(
        &self,
        py: Python<'_>,
        x0: Vec<f64>,
        dt: f64,
        t_end: f64,
        seed: u64,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let traj = py
            .detach(|| {
                self.inner
                    .simulate_truth(&x0, dt, t_end, &mut stream_rng(seed, 0))
            })
            .map_err(to_py)?;
        let times = (0..traj.len()).map(|i| traj.time(i)).collect();
        Ok((times, traj.states))
    }

    /// Simulate and observe `x2` every `interval` with noise variance `r`;
    /// returns `(times, values)` of the measurements.
    #[pyo3(signature = (x0, dt, t_end, r, interval, seed))]
    #[allow(clippy::too_many_arguments)]
    fn measure(
        &self,
        py: Python<'_>,
        x0: Vec<f64>,
        dt: f64,
        t_end: f64,
        r: f64,
        interval: f64,
        seed: u64,
    ) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let mm = MeasurementModel::observe_x2(r, interval).map_err(to_py)?;
        let meas = py
            .detach(|| {
                let traj = self
                    .inner
                    .simulate_truth(&x0, dt, t_end, &mut stream_rng(seed, 0))?;
                traj.observe(&mm, &mut stream_rng(seed, 1))
            })
            .map_err(to_py)?;
        Ok((meas.times, meas.values))
    }

    /// Derive the dual reaction network.
    fn dual(&self) -> PyResult<PyDualProcess> {
        Ok(PyDualProcess {
            inner: dual::DualProcess::from_model(&self.inner).map_err(to_py)?,
        })
    }
}

/// Dual reaction network with its Feynman–Kac weight rate.
#[pyclass(name = "DualProcess", frozen)]
struct PyDualProcess {
    inner: dual::DualProcess,
}

#[pymethods]
impl PyDualProcess {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dual::DualProcess::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Reactions as `(rate, ff_orders, delta, sign_toggle)` tuples.
    fn reactions(&self) -> Vec<(f64, Vec<u32>, Vec<i64>, bool)> {
        self.inner
            .reactions
            .iter()
            .map(|r| {
                (
                    r.rate_coefficient,
                    r.ff_orders.clone(),
                    r.delta.clone(),
                    r.sign_toggle,
                )
            })
            .collect()
    }

    fn total_propensity(&self, n: Vec<u32>) -> f64 {
        self.inner.total_propensity(&n)
    }

    fn weight_rate(&self, n: Vec<u32>) -> f64 {
        self.inner.feynman_kac.eval(&n)
    }

    #[getter]
    fn model_hash(&self) -> String {
        self.inner.model_hash()
    }
}

fn estimate<'py>(py: Python<'py>, e: MomentEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", e.value)?;
    d.set_item("std_error", e.std_error)?;
    d.set_item("effective_sample_size", e.effective_sample_size)?;
    Ok(d)
}

/// Terminal distribution of weighted dual paths for one initial population.
#[pyclass(name = "DualTable", frozen)]
struct PyDualTable {
    inner: dual::DualTable,
}

#[pymethods]
impl PyDualTable {
    /// Simulate `n_paths` dual paths started from `(0, exponents...)`.
    #[staticmethod]
    #[pyo3(signature = (process, exponents, tau_tilde, n_paths, seed = 0, workers = None))]
    fn build(
        py: Python<'_>,
        process: &PyDualProcess,
        exponents: Vec<u32>,
        tau_tilde: f64,
        n_paths: u64,
        seed: u64,
        workers: Option<usize>,
    ) -> PyResult<Self> {
        let mut initial = vec![0];
        initial.extend(exponents);
        let cfg = TableBuild {
            tau_tilde,
            n_paths,
            caps: Caps::default(),
            seed,
            workers,
        };
        let inner = py
            .detach(|| dual::build_dual_table(&process.inner, &initial, &cfg))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: dual::DualTable::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    fn merge(&self, other: &PyDualTable) -> PyResult<Self> {
        Ok(Self {
            inner: dual::merge_tables(&self.inner, &other.inner).map_err(to_py)?,
        })
    }

    #[getter]
    fn tau_tilde(&self) -> f64 {
        self.inner.tau_tilde
    }

    #[getter]
    fn n_paths(&self) -> u64 {
        self.inner.n_paths
    }

    #[getter]
    fn truncated_paths(&self) -> u64 {
        self.inner.truncated_paths
    }

    #[getter]
    fn entries(&self) -> usize {
        self.inner.entries.len()
    }

    /// Moment estimate at a point `x0` after `r_ts * tau_tilde`.
    #[pyo3(signature = (x0, r_ts = 1.0))]
    fn delta_moment<'py>(
        &self,
        py: Python<'py>,
        x0: Vec<f64>,
        r_ts: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        estimate(py, self.inner.delta_moment(&x0, r_ts).map_err(to_py)?)
    }

    /// Moment estimate under a Gaussian initial belief.
    #[pyo3(signature = (mean, cov, r_ts = 1.0))]
    fn gaussian_moment<'py>(
        &self,
        py: Python<'py>,
        mean: [f64; 2],
        cov: [[f64; 2]; 2],
        r_ts: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let b = belief(mean, cov)?;
        estimate(py, self.inner.gaussian_moment(&b, r_ts).map_err(to_py)?)
    }
}

/// The five forecast tables `x1, x2, x1^2, x2^2, x1 x2`.
#[pyclass(name = "DualTableSet", frozen)]
struct PyDualTableSet {
    inner: dual::DualTableSet,
}

#[pymethods]
impl PyDualTableSet {
    #[staticmethod]
    #[pyo3(signature = (process, tau_tilde, n_paths, seed = 0, workers = None))]
    fn build(
        py: Python<'_>,
        process: &PyDualProcess,
        tau_tilde: f64,
        n_paths: u64,
        seed: u64,
        workers: Option<usize>,
    ) -> PyResult<Self> {
        let cfg = TableBuild {
            tau_tilde,
            n_paths,
            caps: Caps::default(),
            seed,
            workers,
        };
        let inner = py
            .detach(|| dual::DualTableSet::build(&process.inner, &cfg))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn tau_tilde(&self) -> f64 {
        self.inner.tau_tilde()
    }
}

/// `E[x1^n1 x2^n2]` under `N(mean, cov)`.
#[pyfunction]
fn raw_moment(mean: [f64; 2], cov: [[f64; 2]; 2], n1: u32, n2: u32) -> PyResult<f64> {
    dukf_core::raw_moment(&belief(mean, cov)?, n1, n2).map_err(to_py)
}

fn output<'py>(py: Python<'py>, out: &FilterOutput) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let steps = &out.steps;
    d.set_item("t", steps.iter().map(|s| s.t).collect::<Vec<_>>())?;
    d.set_item(
        "mean",
        steps.iter().map(|s| s.posterior.mean).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "cov",
        steps.iter().map(|s| s.posterior.cov).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "forecast_mean",
        steps.iter().map(|s| s.forecast.mean).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "forecast_cov",
        steps.iter().map(|s| s.forecast.cov).collect::<Vec<_>>(),
    )?;
    d.set_item("gain", steps.iter().map(|s| s.gain).collect::<Vec<_>>())?;
    d.set_item("warnings", out.warnings().cloned().collect::<Vec<_>>())?;
    Ok(d)
}

/// Ensemble Kalman filter observing `x2`.
#[pyfunction]
#[pyo3(signature = (model, times, values, r, interval, init_mean, init_cov, ensemble_size = 1000, integrator_dt = 1e-4, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn run_enkf<'py>(
    py: Python<'py>,
    model: &PyModel,
    times: Vec<f64>,
    values: Vec<f64>,
    r: f64,
    interval: f64,
    init_mean: [f64; 2],
    init_cov: [[f64; 2]; 2],
    ensemble_size: usize,
    integrator_dt: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let meas = series(times, values)?;
    let mm = MeasurementModel::observe_x2(r, interval).map_err(to_py)?;
    let config = EnkfConfig {
        ensemble_size,
        integrator_dt,
        init_mean,
        init_cov,
        seed,
    };
    let setup = FilterSetup::Enkf {
        model: &model.inner,
        mm: &mm,
        config: &config,
    };
    let out = py.detach(|| run_filter(&setup, &meas)).map_err(to_py)?;
    output(py, &out)
}

/// Duality-based Kalman filter observing `x2`.
#[pyfunction]
#[pyo3(signature = (tables, times, values, r, interval, init_mean, init_cov))]
#[allow(clippy::too_many_arguments)]
fn run_dukf<'py>(
    py: Python<'py>,
    tables: &PyDualTableSet,
    times: Vec<f64>,
    values: Vec<f64>,
    r: f64,
    interval: f64,
    init_mean: [f64; 2],
    init_cov: [[f64; 2]; 2],
) -> PyResult<Bound<'py, PyDict>> {
    let meas = series(times, values)?;
    let mm = MeasurementModel::observe_x2(r, interval).map_err(to_py)?;
    let config = DukfConfig {
        initial: belief(init_mean, init_cov)?,
        ..DukfConfig::default()
    };
    let setup = FilterSetup::Dukf {
        mm: &mm,
        tables: &tables.inner,
        config: &config,
    };
    let out = py.detach(|| run_filter(&setup, &meas)).map_err(to_py)?;
    output(py, &out)
}

/// Run the file-based pipeline: truth, dual network and tables, both
/// filters and the comparison, all under `out`. `config_json` overrides
/// defaults; returns the paths written.
#[pyfunction]
#[pyo3(signature = (out, config_json = None))]
fn run_experiment(
    py: Python<'_>,
    out: PathBuf,
    config_json: Option<&str>,
) -> PyResult<Vec<String>> {
    let cfg: ExperimentConfig = match config_json {
        Some(text) => ExperimentConfig::from_json(text).map_err(to_py)?,
        None => ExperimentConfig::default(),
    };
    let written = py
        .detach(|| -> dukf_core::Result<Vec<PathBuf>> {
            let mut written = Vec::new();
            written.extend(harness::cmd_simulate_truth(&cfg, &out)?.written);
            written.extend(harness::cmd_derive_dual(&cfg, &out)?.written);
            written.extend(harness::cmd_gen_dual_tables(&cfg, &out, false)?.written);
            let mut runs = Vec::new();
            for kind in [FilterKind::Enkf, FilterKind::Dukf] {
                let dir = out.join(kind.to_string());
                written.extend(harness::cmd_run(kind, &cfg, &out, &dir)?.written);
                runs.push(harness::RunInput {
                    label: kind.to_string(),
                    dir,
                });
            }
            written.extend(
                harness::cmd_compare(
                    &runs,
                    &out.join(harness::TRUTH_FILE),
                    Some(&out.join(harness::MEASUREMENTS_FILE)),
                    &out.join("compare"),
                )?
                .written,
            );
            Ok(written)
        })
        .map_err(to_py)?;
    Ok(written.iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn dukf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyDualProcess>()?;
    m.add_class::<PyDualTable>()?;
    m.add_class::<PyDualTableSet>()?;
    m.add_function(wrap_pyfunction!(raw_moment, m)?)?;
    m.add_function(wrap_pyfunction!(run_enkf, m)?)?;
    m.add_function(wrap_pyfunction!(run_dukf, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    Ok(())
}
