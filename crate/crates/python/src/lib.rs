//! Python bindings for `logsp`.

use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use logsp::dynamics::{picard_iterate, SimConfig, Simulation};
use logsp::observables::ObservableRecord;
use logsp::scenario::{self, Scenario};
use logsp::{kernels, Field, Grid, KernelQuadrature, ModelParams, NonlocalPotential};

fn py_err(e: logsp::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Grid", module = "logsp_py", frozen)]
struct PyGrid {
    inner: Arc<Grid>,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(dimension: usize, half_width: f64, points: usize) -> PyResult<Self> {
        Ok(Self {
            inner: logsp::make_grid(dimension, half_width, points).map_err(py_err)?,
        })
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn half_width(&self) -> f64 {
        self.inner.half_width()
    }

    #[getter]
    fn points(&self) -> usize {
        self.inner.points_per_axis()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    /// Node coordinates along one axis.
    fn coordinates(&self) -> Vec<f64> {
        self.inner.coordinates().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(dimension={}, half_width={}, points={})",
            self.inner.dimension(),
            self.inner.half_width(),
            self.inner.points_per_axis()
        )
    }
}

fn field(grid: &PyGrid, values: Vec<Complex64>) -> PyResult<Field> {
    Field::new(grid.inner.clone(), values).map_err(py_err)
}

fn potential(grid: &PyGrid, u: &Field, lambda: f64, eta: f64, p: f64) -> PyResult<NonlocalPotential> {
    let params = ModelParams::for_datum(lambda, eta, p, u).map_err(py_err)?;
    NonlocalPotential::new(grid.inner.clone(), params, KernelQuadrature::Spectral).map_err(py_err)
}

fn record_dict<'py>(py: Python<'py>, r: &ObservableRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", r.t)?;
    d.set_item("mass", r.mass)?;
    d.set_item("kinetic", r.kinetic)?;
    d.set_item("hartree", r.hartree)?;
    d.set_item("power", r.power)?;
    d.set_item("total_energy", r.total_energy)?;
    d.set_item("log_moment", r.log_moment)?;
    d.set_item("h12_moment", r.h12_moment)?;
    d.set_item("sigma_moment", r.sigma_moment)?;
    d.set_item("grad_norm", r.grad_norm)?;
    Ok(d)
}

/// A running simulation built from a scenario.
#[pyclass(name = "Simulation", module = "logsp_py", unsendable)]
struct PySimulation {
    inner: Simulation,
}

impl PySimulation {
    fn from_scenario(s: &Scenario) -> PyResult<Self> {
        s.validate().map_err(py_err)?;
        let (pot, u0) = s.build().map_err(py_err)?;
        Ok(Self {
            inner: Simulation::new(pot, u0, s.sim).map_err(py_err)?,
        })
    }
}

#[pymethods]
impl PySimulation {
    /// Gaussian datum `amplitude * exp(-|x|^2 / (2 width^2))`.
    #[new]
    #[pyo3(signature = (grid, lambda_, eta, p, dt, t_end, width = 1.0, amplitude = 1.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        grid: &PyGrid,
        lambda_: f64,
        eta: f64,
        p: f64,
        dt: f64,
        t_end: f64,
        width: f64,
        amplitude: f64,
    ) -> PyResult<Self> {
        let u0 = Field::from_fn(grid.inner.clone(), |[x, y]| {
            Complex64::new(amplitude * (-(x * x + y * y) / (2.0 * width * width)).exp(), 0.0)
        });
        let pot = potential(grid, &u0, lambda_, eta, p)?;
        Ok(Self {
            inner: Simulation::new(pot, u0, SimConfig::new(dt, t_end)).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_preset(name: &str) -> PyResult<Self> {
        let s = scenario::find_preset(name).ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))?;
        Self::from_scenario(&s)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Self::from_scenario(&Scenario::from_toml(text).map_err(py_err)?)
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.state().t
    }

    #[getter]
    fn gauge_phase(&self) -> f64 {
        self.inner.gauge_phase()
    }

    #[pyo3(signature = (n = 1))]
    fn step(&mut self, n: usize) -> PyResult<()> {
        for _ in 0..n {
            self.inner.step().map_err(py_err)?;
        }
        Ok(())
    }

    /// Run to the configured end time; returns `"bounded"` or `"suspected_blowup"`.
    fn run(&mut self) -> PyResult<&'static str> {
        let summary = self.inner.run(|_, _| Ok(())).map_err(py_err)?;
        Ok(summary.outcome.as_str())
    }

    fn field(&self) -> Vec<Complex64> {
        self.inner.state().u.values().to_vec()
    }

    fn observe<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        record_dict(py, &self.inner.observe().map_err(py_err)?)
    }

    fn history<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.state().history.iter().map(|r| record_dict(py, r)).collect()
    }
}

/// `lambda P` sampled on the grid, `P = c (G * |u|^2)`.
#[pyfunction]
fn hartree_potential(grid: &PyGrid, values: Vec<Complex64>, lambda_: f64) -> PyResult<Vec<f64>> {
    let u = field(grid, values)?;
    let pot = potential(grid, &u, lambda_, 0.0, 3.0)?;
    Ok(pot.full_newtonian(&u).map_err(py_err)?.into_iter().map(|v| lambda_ * v).collect())
}

/// Conserved energy of `values`.
#[pyfunction]
fn energy(grid: &PyGrid, values: Vec<Complex64>, lambda_: f64, eta: f64, p: f64) -> PyResult<f64> {
    let u = field(grid, values)?;
    let pot = potential(grid, &u, lambda_, eta, p)?;
    let r = logsp::observables::Diagnostics::new(&pot).record(&pot, &u, 0.0, None).map_err(py_err)?;
    Ok(r.total_energy)
}

/// Picard iteration over `[0, t_short]`; returns the final field and the iterate distances.
#[pyfunction]
#[pyo3(signature = (grid, values, lambda_, eta, p, t_short, iterations = 4, substeps = 16))]
#[allow(clippy::too_many_arguments)]
fn picard(
    grid: &PyGrid,
    values: Vec<Complex64>,
    lambda_: f64,
    eta: f64,
    p: f64,
    t_short: f64,
    iterations: usize,
    substeps: usize,
) -> PyResult<(Vec<Complex64>, Vec<f64>)> {
    let u = field(grid, values)?;
    let pot = potential(grid, &u, lambda_, eta, p)?;
    let r = picard_iterate(&pot, &u, t_short, iterations, substeps).map_err(py_err)?;
    Ok((r.field.into_values(), r.distances))
}

#[pyfunction]
fn k_function(x: (f64, f64), y: (f64, f64)) -> PyResult<f64> {
    kernels::k_function([x.0, x.1], [y.0, y.1]).map_err(py_err)
}

/// Kernel-bound report as a JSON string.
#[pyfunction]
#[pyo3(signature = (eta = 1.0, p = 2.0))]
fn verify_kernels(eta: f64, p: f64) -> PyResult<String> {
    let report = scenario::verify_kernels(eta, p).map_err(py_err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn presets() -> Vec<String> {
    scenario::presets().into_iter().map(|s| s.name).collect()
}

#[pyfunction]
fn preset_toml(name: &str) -> PyResult<String> {
    scenario::find_preset(name)
        .map(|s| s.to_toml())
        .ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))
}

/// Run a preset, writing artifacts under `out`; returns the exit code.
#[pyfunction]
fn run_preset(name: &str, out: PathBuf) -> PyResult<i32> {
    let s = scenario::find_preset(name).ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))?;
    Ok(scenario::run_scenario(&s, &out).map_err(py_err)?.exit_code)
}

#[pymodule]
pub fn logsp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(hartree_potential, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(picard, m)?)?;
    m.add_function(wrap_pyfunction!(k_function, m)?)?;
    m.add_function(wrap_pyfunction!(verify_kernels, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(preset_toml, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    Ok(())
}
