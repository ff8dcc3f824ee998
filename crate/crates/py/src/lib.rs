//! Python bindings: problems, reparameterizations, density operators and
//! the runner commands. Fields cross the boundary as flat lists, row-major
//! with `x` fastest.

use std::path::PathBuf;

use neuralto::analysis::{performance_profile, psnr as psnr_db, MetricKind, MetricTable};
use neuralto::density::{self, DensityField, VolumeBudget};
use neuralto::error::Error;
use neuralto::optim::{run_twobar, DesignProblem, OptimizerConfig};
use neuralto::problems::{default_volume, make_problem, CATALOG};
use neuralto::reparam::{self, ArchitectureSpec, CnnConfig, OutputBounding};
use neuralto::runner::{self, preset, RunConfig};
use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: Error) -> PyErr {
    match e {
        Error::MissingArtifact(_) | Error::Io(_) => PyFileNotFoundError::new_err(e.to_string()),
        Error::Parameter(_) | Error::Domain(_) | Error::Parse(_) | Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    Ok(py
        .import("json")?
        .call_method1("loads", (v.to_string(),))?
        .unbind())
}

/// A catalog problem on a structured mesh.
#[pyclass(name = "Problem")]
struct PyProblem {
    inner: DesignProblem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (name, nx=64, ny=32, volume=None, penalty=3.0))]
    fn new(name: &str, nx: usize, ny: usize, volume: Option<f64>, penalty: f64) -> PyResult<Self> {
        let v0 = volume.unwrap_or_else(|| default_volume(name));
        let spec = make_problem(name, (nx, ny), v0)
            .map_err(err)?
            .with_penalty(penalty);
        Ok(PyProblem {
            inner: DesignProblem::new(spec).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.spec.name.clone()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.spec.nx, self.inner.spec.ny)
    }

    #[getter]
    fn volume_target(&self) -> f64 {
        self.inner.volume_target()
    }

    fn objective(&self, rho: Vec<f64>) -> PyResult<f64> {
        self.inner.objective(&rho).map_err(err)
    }

    /// `(objective, gradient)` at a physical density field.
    fn evaluate(&self, rho: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        let ev = self
            .inner
            .model()
            .evaluate(&rho, self.inner.spec.penalty)
            .map_err(err)?;
        Ok((ev.value, ev.grad_wrt_density))
    }

    /// Density filter applied to `x`.
    fn filter(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.filter().apply(&x).map_err(err)
    }

    fn __repr__(&self) -> String {
        let s = &self.inner.spec;
        format!(
            "Problem({:?}, {}x{}, volume={}, penalty={})",
            s.name, s.nx, s.ny, s.volume_target, s.penalty
        )
    }
}

/// A density parameterization: direct, MLP, SIREN or CNN decoder.
#[pyclass(name = "Reparam")]
struct PyReparam {
    inner: reparam::Reparam,
}

#[pymethods]
impl PyReparam {
    #[new]
    #[pyo3(signature = (kind, nx=64, ny=32, volume=0.5, width=20, omega0=30.0, bounding="sigmoid"))]
    fn new(
        kind: &str,
        nx: usize,
        ny: usize,
        volume: f64,
        width: usize,
        omega0: f64,
        bounding: &str,
    ) -> PyResult<Self> {
        let spec = match kind {
            "direct" => ArchitectureSpec::direct(),
            "mlp" => ArchitectureSpec::mlp(width),
            "siren" => ArchitectureSpec::siren(width, omega0),
            "cnn" => ArchitectureSpec::cnn(CnnConfig::default()),
            _ => {
                return Err(PyValueError::new_err(format!(
                    "unknown architecture `{kind}`"
                )))
            }
        };
        let spec = match bounding {
            "sigmoid" => spec,
            "shifted" | "shifted_sigmoid" => spec.with_bounding(OutputBounding::ShiftedSigmoid),
            _ => {
                return Err(PyValueError::new_err(format!(
                    "unknown bounding `{bounding}`"
                )))
            }
        };
        Ok(PyReparam {
            inner: reparam::Reparam::new(&spec, nx, ny, volume).map_err(err)?,
        })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.spec().label()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    #[pyo3(signature = (seed=0))]
    fn init_params(&self, seed: u64) -> Vec<f64> {
        self.inner.init_params(seed).values
    }

    fn density(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.density(&theta).map_err(err)
    }

    /// Pulls a cotangent on the density back to the parameters.
    fn vjp(&self, theta: Vec<f64>, w: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.vjp(&theta, &w).map_err(err)
    }
}

#[pyfunction]
fn problems() -> Vec<&'static str> {
    CATALOG.to_vec()
}

#[pyfunction]
fn presets() -> Vec<String> {
    runner::preset_names()
}

/// Sigmoid with the offset that puts the mean at `volume`.
#[pyfunction]
fn shifted_sigmoid(raw: Vec<f64>, volume: f64) -> PyResult<Vec<f64>> {
    Ok(density::shifted_sigmoid_project(&raw, volume)
        .map_err(err)?
        .rho)
}

/// Black-and-white design keeping the densest elements solid.
#[pyfunction]
fn threshold(rho: Vec<f64>, nx: usize, ny: usize, volume: f64) -> PyResult<Vec<f64>> {
    let field = DensityField::new(nx, ny, rho).map_err(err)?;
    let budget = VolumeBudget::new(volume).map_err(err)?;
    Ok(density::threshold(&field, budget).values)
}

#[pyfunction]
fn psnr(fit: Vec<f64>, target: Vec<f64>) -> PyResult<f64> {
    psnr_db(&fit, &target).map_err(err)
}

/// Profile curves for a solvers × cases matrix (lower is better).
#[pyfunction]
fn profile(values: Vec<Vec<f64>>, taus: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let solvers = (0..values.len()).map(|i| format!("s{i}")).collect();
    let cases = (0..values.first().map_or(0, Vec::len))
        .map(|j| format!("c{j}"))
        .collect();
    let table = MetricTable::new(MetricKind::BestObjective, solvers, cases, values).map_err(err)?;
    performance_profile(&table, &taus).map_err(err)
}

/// Iterates `[(a1, a2, mass, max_violation), ...]` of a two-bar preset.
#[pyfunction]
fn twobar(name: &str) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let cfg = preset(name).map_err(err)?;
    let (Some(tb), OptimizerConfig::Mma { config, .. }) = (cfg.twobar, cfg.optimizer) else {
        return Err(PyValueError::new_err(format!(
            "`{name}` is not a two-bar preset"
        )));
    };
    let run = run_twobar(&tb.param, &tb.start, &config, cfg.budget).map_err(err)?;
    Ok(run
        .records
        .iter()
        .map(|r| (r.areas[0], r.areas[1], r.mass, r.max_violation))
        .collect())
}

fn run_config(preset_name: Option<&str>, config: Option<&str>) -> PyResult<RunConfig> {
    match (preset_name, config) {
        (Some(p), None) => preset(p).map_err(err),
        (None, Some(c)) => serde_json::from_str(c).map_err(|e| err(e.into())),
        _ => Err(PyValueError::new_err(
            "pass exactly one of `preset` or `config`",
        )),
    }
}

/// Runs an optimization and writes its artifacts to `out`. `config` is a
/// JSON run configuration. Returns the manifest results.
#[pyfunction]
#[pyo3(signature = (out, preset=None, config=None, budget=None, seed=None))]
fn optimize(
    py: Python<'_>,
    out: PathBuf,
    preset: Option<&str>,
    config: Option<&str>,
    budget: Option<usize>,
    seed: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let mut cfg = run_config(preset, config)?;
    if let Some(b) = budget {
        cfg.budget = b;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let manifest = py
        .detach(|| runner::cmd_optimize(&cfg, &out))
        .map_err(err)?;
    to_py(py, &manifest.results)
}

#[pymodule]
fn neuralto_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyReparam>()?;
    m.add_function(wrap_pyfunction!(problems, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(shifted_sigmoid, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(twobar, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    Ok(())
}
