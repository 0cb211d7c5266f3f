//! Python bindings for the `blockspin` crate.

use blockspin::decay::{decay_profile, fit_decay, SourceSpec};
use blockspin::fourier::{strip_bound_report, FreeSetup, Quadrature};
use blockspin::images::images_residual_report;
use blockspin::multiscale::{
    a_sequence as core_a_sequence, c_expansion_residual, green_neumann, positivity_report, rg_step_residual,
    rg_telescope_residual,
};
use blockspin::{Error, LatticeGeometry, MultiscaleParams, Site};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Geometry(_) | Error::Mismatch(_) | Error::OutOfRange(_) | Error::Invalid(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Cube of `(L^m)^d` sites with spacing `L^-k`.
#[pyclass(name = "Geometry", frozen)]
#[derive(Clone)]
struct PyGeometry {
    inner: LatticeGeometry,
}

#[pymethods]
impl PyGeometry {
    #[new]
    fn new(d: usize, l: u64, k: u32, m: u32) -> PyResult<Self> {
        LatticeGeometry::new(d, l, k, m).map(|inner| PyGeometry { inner }).map_err(py_err)
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter(L)]
    fn l(&self) -> u64 {
        self.inner.l()
    }

    #[getter]
    fn k(&self) -> i32 {
        self.inner.k()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    #[getter]
    fn side_length(&self) -> f64 {
        self.inner.side_length()
    }

    #[getter]
    fn num_sites(&self) -> usize {
        self.inner.num_sites()
    }

    fn coarse(&self, j: u32) -> PyResult<Self> {
        self.inner.coarse(j).map(|inner| PyGeometry { inner }).map_err(py_err)
    }

    fn block_label(&self, j: u32, x: Vec<i64>) -> Vec<i64> {
        self.inner.block_label(j, &Site(x)).0
    }

    fn block_sites(&self, j: u32, y: Vec<i64>) -> PyResult<Vec<Vec<i64>>> {
        let sites = self.inner.block_sites(j, &Site(y)).map_err(py_err)?;
        Ok(sites.into_iter().map(|s| s.0).collect())
    }

    fn image_points(&self, y: Vec<i64>, shells: usize) -> Vec<Vec<i64>> {
        self.inner.image_points(&Site(y), shells).into_iter().map(|s| s.0).collect()
    }

    fn __repr__(&self) -> String {
        let g = &self.inner;
        format!("Geometry(d={}, L={}, k={}, n={})", g.d(), g.l(), g.k(), g.n())
    }
}

/// Mass parameters `a`, `mu0` together with the block factor `L`.
#[pyclass(name = "Params", frozen)]
#[derive(Clone)]
struct PyParams {
    inner: MultiscaleParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (a = 1.0, mu0 = 0.0, l = 3))]
    fn new(a: f64, mu0: f64, l: u64) -> PyResult<Self> {
        MultiscaleParams::new(a, mu0, l).map(|inner| PyParams { inner }).map_err(py_err)
    }

    fn a_j(&self, j: u32) -> f64 {
        self.inner.a_j(j)
    }
}

/// `[a_1, ..., a_jmax]`.
#[pyfunction]
fn a_sequence(a: f64, l: u64, j_max: u32) -> Vec<f64> {
    core_a_sequence(a, l, j_max)
}

/// Real part of the Neumann Green kernel as a nested list.
#[pyfunction]
fn green_kernel(geom: &PyGeometry, params: &PyParams) -> PyResult<Vec<Vec<f64>>> {
    let g = green_neumann(geom.inner, &params.inner).map_err(py_err)?;
    let k = g.kernel();
    Ok((0..k.nrows()).map(|i| (0..k.ncols()).map(|j| k[(i, j)].re).collect()).collect())
}

#[pyfunction]
fn rg_step(geom: &PyGeometry, params: &PyParams, j: u32) -> PyResult<f64> {
    rg_step_residual(geom.inner, &params.inner, j).map_err(py_err)
}

#[pyfunction]
fn telescope(geom: &PyGeometry, params: &PyParams) -> PyResult<f64> {
    rg_telescope_residual(geom.inner, &params.inner).map_err(py_err)
}

#[pyfunction]
fn c_expansion(geom: &PyGeometry, params: &PyParams, j: u32) -> PyResult<f64> {
    c_expansion_residual(geom.inner, &params.inner, j).map_err(py_err)
}

/// Smallest-eigenvalue ratio of the defining operator against `-Δ + 1`.
#[pyfunction]
fn positivity(geom: &PyGeometry, params: &PyParams) -> PyResult<f64> {
    positivity_report(&[geom.inner], &params.inner).map(|v| v[0].1).map_err(py_err)
}

/// Image-sum residuals for `1..=shells` shells, one dict per truncation.
#[pyfunction]
fn images_residuals<'py>(
    py: Python<'py>,
    geom: &PyGeometry,
    params: &PyParams,
    shells: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rep = images_residual_report(geom.inner, &params.inner, shells, &Quadrature::default()).map_err(py_err)?;
    rep.rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("shells", r.shells)?;
            d.set_item("g_max", r.g_max)?;
            d.set_item("g_median", r.g_median)?;
            d.set_item("gq_max", r.gq_max)?;
            d.set_item("gq_median", r.gq_median)?;
            Ok(d)
        })
        .collect()
}

/// Weighted supremum of `|H|` over the sampled strip.
#[pyfunction]
#[pyo3(signature = (d, k, params, q_max = 0.05, n_p = 64, c_star = 1.0))]
fn strip_sup(d: usize, k: u32, params: &PyParams, q_max: f64, n_p: usize, c_star: f64) -> PyResult<f64> {
    let setup = FreeSetup::new(d, k, &params.inner).map_err(py_err)?;
    strip_bound_report(&setup, c_star, q_max, n_p).map(|r| r.sup).map_err(py_err)
}

/// `(distance, |G f|)` pairs for the unit block at the origin as source.
#[pyfunction]
fn profile(geom: &PyGeometry, params: &PyParams) -> PyResult<Vec<(f64, f64)>> {
    let g = geom.inner;
    let k = u32::try_from(g.k()).map_err(|_| PyValueError::new_err("negative scale"))?;
    let src = SourceSpec::Block { j: k, label: Site(vec![0; g.d()]) };
    decay_profile(g, &params.inner, &src).map_err(py_err)
}

/// Least-squares decay fit; returns `(rate, log_prefactor)`.
#[pyfunction]
#[pyo3(signature = (points, window = None))]
fn fit(points: Vec<(f64, f64)>, window: Option<(f64, f64)>) -> PyResult<(f64, f64)> {
    fit_decay(&points, window).map(|f| (f.rate, f.log_prefactor)).map_err(py_err)
}

#[pymodule]
fn blockspin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(a_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(green_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(rg_step, m)?)?;
    m.add_function(wrap_pyfunction!(telescope, m)?)?;
    m.add_function(wrap_pyfunction!(c_expansion, m)?)?;
    m.add_function(wrap_pyfunction!(positivity, m)?)?;
    m.add_function(wrap_pyfunction!(images_residuals, m)?)?;
    m.add_function(wrap_pyfunction!(strip_sup, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    Ok(())
}
