//! Python bindings for `fdlab_core`.

use std::collections::HashMap;
use std::sync::Arc;

use fdlab_core::acceptance::{run_all, AcceptanceOptions};
use fdlab_core::discretization::{build_grid, RadialField, RadialGrid, Spacing};
use fdlab_core::flow::{self, FlowState, FunctionalSet, StepperSettings, Variables};
use fdlab_core::functionals::{gn_deficit, relative_values};
use fdlab_core::params::{classify_region, ParamSet};
use fdlab_core::profiles::{Profile, ProfileKind};
use fdlab_core::region::{region_map as core_region_map, Axis};
use fdlab_core::spectral::{self, Family, QGrid};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: fdlab_core::Error) -> PyErr {
    if e.exit_code() == 2 {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Derived parameters for (d, β, γ) and exactly one of p or m.
#[pyclass(name = "ParamSet", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParamSet {
    inner: ParamSet,
}

#[pymethods]
impl PyParamSet {
    #[new]
    #[pyo3(signature = (d, beta, gamma, *, p=None, m=None))]
    fn new(d: u32, beta: f64, gamma: f64, p: Option<f64>, m: Option<f64>) -> PyResult<Self> {
        let inner = match (p, m) {
            (Some(p), None) => ParamSet::new(d, beta, gamma, p),
            (None, Some(m)) => ParamSet::from_m(d, beta, gamma, m),
            _ => return Err(PyValueError::new_err("give exactly one of p and m")),
        }
        .map_err(err)?;
        Ok(PyParamSet { inner })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn n(&self) -> f64 {
        self.inner.n
    }
    #[getter]
    fn m(&self) -> f64 {
        self.inner.m
    }
    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }
    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
    #[getter]
    fn alpha_fs(&self) -> Option<f64> {
        self.inner.alpha_fs
    }
    #[getter]
    fn beta_fs(&self) -> Option<f64> {
        self.inner.beta_fs
    }

    fn region(&self) -> &'static str {
        classify_region(&self.inner).as_str()
    }

    /// Every derived quantity as strings, in table order.
    fn records(&self) -> Vec<(String, String)> {
        self.inner.records().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    fn __repr__(&self) -> String {
        let ps = &self.inner;
        format!("ParamSet(d={}, beta={}, gamma={}, p={}, m={}, alpha={}, n={})", ps.d, ps.beta, ps.gamma, ps.p, ps.m, ps.alpha, ps.n)
    }
}

/// Finite-volume radial grid.
#[pyclass(name = "Grid", frozen, skip_from_py_object)]
struct PyGrid {
    inner: Arc<RadialGrid>,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (params, r_max, cells, *, first_cell=None))]
    fn new(params: &PyParamSet, r_max: f64, cells: usize, first_cell: Option<f64>) -> PyResult<Self> {
        let spacing = match first_cell {
            None => Spacing::Uniform,
            Some(first) => Spacing::geometric_with_first_cell(r_max, cells, first).map_err(err)?,
        };
        Ok(PyGrid { inner: build_grid(&params.inner, r_max, cells, spacing).map_err(err)? })
    }

    #[getter]
    fn centers(&self) -> Vec<f64> {
        self.inner.centers.clone()
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

fn field(grid: &PyGrid, values: Vec<f64>) -> PyResult<RadialField> {
    RadialField::new(grid.inner.clone(), values).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (kind, params, r, scale=1.0))]
fn profile(kind: &str, params: &PyParamSet, r: Vec<f64>, scale: f64) -> PyResult<Vec<f64>> {
    let p = Profile::with_scale(ProfileKind::parse(kind).map_err(err)?, params.inner, scale);
    Ok(r.into_iter().map(|x| p.eval(x)).collect())
}

/// ℬ_α sampled at the grid centers.
#[pyfunction]
fn barenblatt(grid: &PyGrid, params: &PyParamSet) -> Vec<f64> {
    flow::barenblatt_alpha_field(&grid.inner, &params.inner).values
}

#[pyfunction]
fn squeezed_datum(grid: &PyGrid, params: &PyParamSet, a: f64) -> PyResult<Vec<f64>> {
    Ok(flow::squeezed_datum(&grid.inner, &params.inner, a).map_err(err)?.values)
}

#[pyfunction]
fn mass(grid: &PyGrid, values: Vec<f64>) -> PyResult<f64> {
    Ok(field(grid, values)?.mass())
}

/// (E_rel, I_rel) of a self-similar density.
#[pyfunction]
fn relative_entropy(grid: &PyGrid, params: &PyParamSet, values: Vec<f64>) -> PyResult<(f64, f64)> {
    Ok(relative_values(&field(grid, values)?, &params.inner))
}

#[pyfunction]
fn gn_relative_deficit(grid: &PyGrid, params: &PyParamSet, values: Vec<f64>) -> PyResult<f64> {
    let r = gn_deficit(&field(grid, values)?, &params.inner).map_err(err)?;
    Ok(r.term("relative").unwrap_or(f64::NAN))
}

/// Runs the flow and returns one dict per sample time.
#[pyfunction]
#[pyo3(signature = (grid, params, values, horizon, samples=20, variables="self_similar"))]
fn run_flow(
    py: Python<'_>,
    grid: &PyGrid,
    params: &PyParamSet,
    values: Vec<f64>,
    horizon: f64,
    samples: usize,
    variables: &str,
) -> PyResult<Vec<HashMap<&'static str, f64>>> {
    let variables = match variables {
        "self_similar" => Variables::SelfSimilar,
        "original" => Variables::Original,
        other => return Err(PyValueError::new_err(format!("unknown variables {other:?}"))),
    };
    let s0 = FlowState::new(field(grid, values)?, 0.0, variables, params.inner).map_err(err)?;
    let trace = py
        .detach(|| {
            flow::run_flow(&s0, horizon, &flow::uniform_samples(horizon, samples), &FunctionalSet::all(), &StepperSettings::default())
        })
        .map_err(|f| err(f.error))?;
    Ok(trace
        .rows
        .iter()
        .map(|r| {
            HashMap::from([
                ("time", r.tau),
                ("mass", r.mass),
                ("E", r.e),
                ("F", r.f),
                ("G", r.g),
                ("E_rel", r.e_rel),
                ("I_rel", r.i_rel),
                ("R_star", r.r_star),
                ("R_weighted", r.r_weighted),
            ])
        })
        .collect())
}

/// Lowest eigenvalues of the linearized operator on angular mode `ell`.
#[pyfunction]
#[pyo3(signature = (params, ell, count=4, cells=512))]
fn spectrum(py: Python<'_>, params: &PyParamSet, ell: u32, count: usize, cells: usize) -> PyResult<Vec<f64>> {
    let ps = params.inner;
    py.detach(|| {
        let grid = spectral::reference_spectral_grid(&ps, cells)?;
        let mp = spectral::assemble_mode(&ps, ell, &grid)?;
        Ok(spectral::solve_spectrum(&mp, count)?.eigenvalues)
    })
    .map_err(err)
}

/// α where the non-radial Q-form loses positivity along β = γ + 2(α − 1).
#[pyfunction]
#[pyo3(signature = (d, gamma, p, ell_max=4, tol=1e-5))]
fn threshold(py: Python<'_>, d: u32, gamma: f64, p: f64, ell_max: u32, tol: f64) -> PyResult<(f64, f64)> {
    py.detach(|| spectral::symmetry_threshold_via_q(&Family { d, gamma, p }, None, &QGrid::default(), ell_max, tol))
        .map(|t| (t.alpha, t.beta))
        .map_err(err)
}

/// (β, γ, class) at every cell center.
#[pyfunction]
#[pyo3(signature = (d, p, gamma, beta, steps=50))]
fn region_map(py: Python<'_>, d: u32, p: f64, gamma: (f64, f64), beta: (f64, f64), steps: usize) -> PyResult<Vec<(f64, f64, &'static str)>> {
    let g = Axis::new(gamma.0, gamma.1, steps).map_err(err)?;
    let b = Axis::new(beta.0, beta.1, steps).map_err(err)?;
    let cells = py.detach(|| core_region_map(d, g, b, p, None)).map_err(err)?;
    Ok(cells.into_iter().map(|c| (c.beta, c.gamma, c.class.as_str())).collect())
}

/// Runs acceptance criteria; returns (id, passed, report line).
#[pyfunction]
#[pyo3(signature = (only=Vec::new()))]
fn acceptance(py: Python<'_>, only: Vec<String>) -> PyResult<Vec<(String, bool, String)>> {
    let opts = AcceptanceOptions { only, ..Default::default() };
    let reports = py.detach(|| run_all(&opts)).map_err(err)?;
    Ok(reports.into_iter().map(|r| (r.id.clone(), r.passed, r.line())).collect())
}

#[pymodule]
fn fdlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParamSet>()?;
    m.add_class::<PyGrid>()?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(barenblatt, m)?)?;
    m.add_function(wrap_pyfunction!(squeezed_datum, m)?)?;
    m.add_function(wrap_pyfunction!(mass, m)?)?;
    m.add_function(wrap_pyfunction!(relative_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(gn_relative_deficit, m)?)?;
    m.add_function(wrap_pyfunction!(run_flow, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(region_map, m)?)?;
    m.add_function(wrap_pyfunction!(acceptance, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
