//! Python bindings. Matrices cross the boundary as lists of rows and
//! impulse responses as lists of blocks.

use hankel_sysid::denoise::{denoise as denoise_ir, Base, DenoiseMode, MultiscaleConfig};
use hankel_sysid::estimation::fir_least_squares;
use hankel_sysid::experiments::{run_experiment, ExperimentConfig};
use hankel_sysid::realization::ho_kalman as ho_kalman_ir;
use hankel_sysid::{ImpulseResponse, StateSpaceSystem, SysIdError, Trajectory};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = Vec<Vec<f64>>;

fn err(e: SysIdError) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_matrix(rows: &Rows, name: &str) -> PyResult<DMatrix<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err(format!("{name} must be a non-empty rectangular list of rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_ir(blocks: &[Rows]) -> PyResult<ImpulseResponse> {
    let mats = blocks
        .iter()
        .map(|b| to_matrix(b, "impulse response block"))
        .collect::<PyResult<Vec<_>>>()?;
    ImpulseResponse::new(mats).map_err(err)
}

fn from_ir(f: &ImpulseResponse) -> Vec<Rows> {
    f.iter().map(to_rows).collect()
}

/// Stable linear system `x' = Ax + Bu + w`, `y = Cx + Du + v`.
#[pyclass(name = "System", module = "hankel_sysid")]
struct PySystem {
    inner: StateSpaceSystem,
}

#[pymethods]
impl PySystem {
    #[new]
    #[pyo3(signature = (a, b, c, d, sigma_x = 0.0, sigma_y = 0.0))]
    fn new(a: Rows, b: Rows, c: Rows, d: Rows, sigma_x: f64, sigma_y: f64) -> PyResult<Self> {
        let sys = StateSpaceSystem::new(
            to_matrix(&a, "A")?,
            to_matrix(&b, "B")?,
            to_matrix(&c, "C")?,
            to_matrix(&d, "D")?,
        )
        .map_err(err)?;
        Ok(Self {
            inner: sys.with_isotropic_noise(sigma_x, sigma_y),
        })
    }

    /// Random system with orthonormal `B`, `C` and `ρ(A) = lambda_max`.
    #[staticmethod]
    #[pyo3(signature = (d, d_u, d_y, lambda_max, seed, sigma_x = 0.0, sigma_y = 0.0))]
    fn random(d: usize, d_u: usize, d_y: usize, lambda_max: f64, seed: u64, sigma_x: f64, sigma_y: f64) -> PyResult<Self> {
        let sys = hankel_sysid::random_system(d, d_u, d_y, lambda_max, seed).map_err(err)?;
        Ok(Self {
            inner: sys.with_isotropic_noise(sigma_x, sigma_y),
        })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn d_u(&self) -> usize {
        self.inner.d_u()
    }

    #[getter]
    fn d_y(&self) -> usize {
        self.inner.d_y()
    }

    #[getter]
    fn spectral_radius(&self) -> f64 {
        self.inner.spectral_radius()
    }

    /// `(A, B, C, D)` as lists of rows.
    fn matrices(&self) -> (Rows, Rows, Rows, Rows) {
        let s = &self.inner;
        (to_rows(s.a()), to_rows(s.b()), to_rows(s.c()), to_rows(s.d()))
    }

    /// Markov parameters `F(0), ..., F(horizon - 1)`.
    fn impulse_response(&self, horizon: usize) -> PyResult<Vec<Rows>> {
        if horizon == 0 {
            return Err(PyValueError::new_err("horizon must be positive"));
        }
        Ok(from_ir(&self.inner.impulse_response(horizon)))
    }

    /// One rollout of length `t` from `x(0) = 0`; returns `(u, y)`.
    fn simulate(&self, t: usize, seed: u64) -> PyResult<(Rows, Rows)> {
        let traj = hankel_sysid::simulate(&self.inner, t, seed).map_err(err)?;
        Ok((to_rows(&traj.u), to_rows(&traj.y)))
    }

    fn __repr__(&self) -> String {
        format!(
            "System(order={}, d_u={}, d_y={}, rho={:.4})",
            self.inner.order(),
            self.inner.d_u(),
            self.inner.d_y(),
            self.inner.spectral_radius()
        )
    }
}

/// Least-squares FIR fit of length `fir_len` from inputs `u` and outputs `y`.
#[pyfunction]
fn estimate_fir(u: Rows, y: Rows, fir_len: usize) -> PyResult<Vec<Rows>> {
    let traj = Trajectory::new(to_matrix(&u, "u")?, to_matrix(&y, "y")?).map_err(err)?;
    Ok(from_ir(&fir_least_squares(&traj, fir_len).map_err(err)?.ir))
}

/// FIR length the de-noiser needs for horizon `l` in the given base.
#[pyfunction]
#[pyo3(signature = (l, base = 3))]
fn required_fir_len(l: usize, base: usize) -> PyResult<usize> {
    let base = Base::from_value(base).map_err(err)?;
    Ok(MultiscaleConfig::new(l, 1, base, DenoiseMode::None).map_err(err)?.required_fir_len())
}

/// Low-rank Hankel de-noising of an impulse response.
#[pyfunction]
#[pyo3(signature = (ir, l, d, base = 3, mode = "multiscale"))]
fn denoise(ir: Vec<Rows>, l: usize, d: usize, base: usize, mode: &str) -> PyResult<Vec<Rows>> {
    let mode: DenoiseMode = mode.parse().map_err(err)?;
    let cfg = MultiscaleConfig::new(l, d, Base::from_value(base).map_err(err)?, mode).map_err(err)?;
    Ok(from_ir(&denoise_ir(&to_ir(&ir)?, &cfg).map_err(err)?))
}

/// Order-`d` realization `(A, B, C, D)` from `F(0..2l)`.
#[pyfunction]
fn ho_kalman(ir: Vec<Rows>, l: usize, d: usize) -> PyResult<(Rows, Rows, Rows, Rows)> {
    let r = ho_kalman_ir(&to_ir(&ir)?, l, d).map_err(err)?;
    Ok((to_rows(&r.a_hat), to_rows(&r.b_hat), to_rows(&r.c_hat), to_rows(&r.d_hat)))
}

/// Runs one of the five preset benchmarks; returns one dict per CSV row.
#[pyfunction]
#[pyo3(name = "bench", signature = (setting, seed = 0, n_systems = None, t_grid = None))]
fn run_bench<'py>(
    py: Python<'py>,
    setting: usize,
    seed: u64,
    n_systems: Option<usize>,
    t_grid: Option<Vec<usize>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = ExperimentConfig::preset(setting, seed).map_err(err)?;
    if let Some(n) = n_systems {
        cfg.n_systems = n;
    }
    if let Some(g) = t_grid {
        cfg.t_grid = g;
    }
    cfg.validate().map_err(err)?;
    let result = run_experiment(&cfg).map_err(err)?;
    result
        .rows()
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("setting", r.setting)?;
            d.set_item("T", r.t)?;
            d.set_item("estimator", r.estimator)?;
            d.set_item("n_systems", r.n_systems)?;
            d.set_item("err_mean", r.err_mean)?;
            d.set_item("err_median", r.err_median)?;
            d.set_item("err_std", r.err_std)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "hankel_sysid")]
fn hankel_sysid_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_function(wrap_pyfunction!(estimate_fir, m)?)?;
    m.add_function(wrap_pyfunction!(required_fir_len, m)?)?;
    m.add_function(wrap_pyfunction!(denoise, m)?)?;
    m.add_function(wrap_pyfunction!(ho_kalman, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
