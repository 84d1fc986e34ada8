//! Linear time-invariant systems: construction, random generation,
//! simulation and exact impulse responses.
//!
//! The model is
//!
//! ```text
//! x(t) = A x(t-1) + B u(t-1) + ξ(t),   x(0) = 0
//! y(t) = C x(t)   + D u(t)   + η(t)
//! ```
//!
//! with `ξ ~ N(0, Σ_x)` and `η ~ N(0, Σ_y)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SysIdError};
use crate::impulse::ImpulseResponse;
use crate::linalg::{psd_sqrt, random_orthonormal, spectral_radius};
use crate::rng::{gaussian_matrix, rng_from_seed, rng_stream};
use crate::spectral::hinf_grid_norm;

const MAX_RESCALE_DRAWS: usize = 16;

/// Stable state-space system with Gaussian process and observation noise.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    sigma_x: DMatrix<f64>,
    sigma_y: DMatrix<f64>,
}

impl StateSpaceSystem {
    /// Noise-free system. Fails on inconsistent shapes or `ρ(A) >= 1`.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(SysIdError::DimensionMismatch(format!(
                "A must be square and non-empty, got {:?}",
                a.shape()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(SysIdError::DimensionMismatch(format!(
                "B is {:?}, expected {n} x d_u",
                b.shape()
            )));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(SysIdError::DimensionMismatch(format!(
                "C is {:?}, expected d_y x {n}",
                c.shape()
            )));
        }
        if d.shape() != (c.nrows(), b.ncols()) {
            return Err(SysIdError::DimensionMismatch(format!(
                "D is {:?}, expected {:?}",
                d.shape(),
                (c.nrows(), b.ncols())
            )));
        }
        let rho = spectral_radius(&a)?;
        if rho >= 1.0 {
            return Err(SysIdError::Unstable(rho));
        }
        let sigma_x = DMatrix::zeros(n, n);
        let sigma_y = DMatrix::zeros(c.nrows(), c.nrows());
        Ok(Self {
            a,
            b,
            c,
            d,
            sigma_x,
            sigma_y,
        })
    }

    /// Replaces both noise covariances after validating them.
    pub fn with_noise(mut self, sigma_x: DMatrix<f64>, sigma_y: DMatrix<f64>) -> Result<Self> {
        if sigma_x.shape() != (self.order(), self.order()) {
            return Err(SysIdError::DimensionMismatch(format!(
                "sigma_x is {:?}, expected {1}x{1}",
                sigma_x.shape(),
                self.order()
            )));
        }
        if sigma_y.shape() != (self.d_y(), self.d_y()) {
            return Err(SysIdError::DimensionMismatch(format!(
                "sigma_y is {:?}, expected {1}x{1}",
                sigma_y.shape(),
                self.d_y()
            )));
        }
        psd_sqrt(&sigma_x, "sigma_x")?;
        psd_sqrt(&sigma_y, "sigma_y")?;
        self.sigma_x = sigma_x;
        self.sigma_y = sigma_y;
        Ok(self)
    }

    /// `Σ_x = sx²·I`, `Σ_y = sy²·I`.
    pub fn with_isotropic_noise(self, sx: f64, sy: f64) -> Self {
        let (n, p) = (self.order(), self.d_y());
        self.with_noise(
            DMatrix::identity(n, n) * (sx * sx),
            DMatrix::identity(p, p) * (sy * sy),
        )
        .expect("scaled identities are PSD")
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn sigma_x(&self) -> &DMatrix<f64> {
        &self.sigma_x
    }
    pub fn sigma_y(&self) -> &DMatrix<f64> {
        &self.sigma_y
    }

    /// State dimension `d`.
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn d_u(&self) -> usize {
        self.b.ncols()
    }
    pub fn d_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a).expect("validated at construction")
    }

    /// Markov parameters `F*(0) = D`, `F*(t) = C A^{t-1} B`.
    pub fn impulse_response(&self, horizon: usize) -> ImpulseResponse {
        markov_parameters(&self.a, &self.b, &self.c, &self.d, horizon)
    }

    /// Response to process noise, `G*(t) = C A^t`.
    pub fn process_noise_response(&self, horizon: usize) -> ImpulseResponse {
        assert!(horizon >= 1);
        let mut blocks = Vec::with_capacity(horizon);
        let mut ca = self.c.clone();
        for _ in 0..horizon {
            let next = &ca * &self.a;
            blocks.push(ca);
            ca = next;
        }
        ImpulseResponse::new(blocks).expect("consistent shapes")
    }

    /// `(W^{-1} A W, W^{-1} B, C W, D)`, same noise on outputs; `Σ_x` is
    /// mapped to `W^{-1} Σ_x W^{-T}`.
    pub fn similarity(&self, w: &DMatrix<f64>) -> Result<Self> {
        let winv = w
            .clone()
            .try_inverse()
            .ok_or_else(|| SysIdError::InvalidArgument("similarity transform is singular".into()))?;
        Ok(Self {
            a: &winv * &self.a * w,
            b: &winv * &self.b,
            c: &self.c * w,
            d: self.d.clone(),
            sigma_x: &winv * &self.sigma_x * winv.transpose(),
            sigma_y: self.sigma_y.clone(),
        })
    }
}

/// `D, CB, CAB, CA²B, ...` for arbitrary (not necessarily stable) matrices.
pub fn markov_parameters(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    horizon: usize,
) -> ImpulseResponse {
    assert!(horizon >= 1);
    let mut blocks = Vec::with_capacity(horizon);
    blocks.push(d.clone());
    let mut akb = b.clone();
    for _ in 1..horizon {
        blocks.push(c * &akb);
        akb = a * akb;
    }
    ImpulseResponse::new(blocks).expect("consistent shapes")
}

/// Random system following the experimental recipe: orthonormal rows or
/// columns for `B` and `C`, Gaussian `A` rescaled to spectral radius
/// `lambda_max`, `D = 0`, no noise.
pub fn random_system(
    d: usize,
    d_u: usize,
    d_y: usize,
    lambda_max: f64,
    seed: u64,
) -> Result<StateSpaceSystem> {
    if d == 0 || d_u == 0 || d_y == 0 {
        return Err(SysIdError::InvalidArgument("dimensions must be positive".into()));
    }
    if !(lambda_max > 0.0 && lambda_max < 1.0) {
        return Err(SysIdError::InvalidArgument(format!(
            "lambda_max must lie in (0, 1), got {lambda_max}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let b = random_orthonormal(&mut rng, d, d_u);
    let c = random_orthonormal(&mut rng, d_y, d);
    for _ in 0..MAX_RESCALE_DRAWS {
        let a = gaussian_matrix(&mut rng, d, d);
        let rho = spectral_radius(&a)?;
        if rho > 1e-8 * a.amax().max(1.0) {
            let a = a * (lambda_max / rho);
            return StateSpaceSystem::new(a, b, c, DMatrix::zeros(d_y, d_u));
        }
    }
    Err(SysIdError::RescaleFailed(MAX_RESCALE_DRAWS))
}

/// One rollout. Row `t` of `u`, `y` (and `x`, when kept) holds time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub u: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub x: Option<DMatrix<f64>>,
}

impl Trajectory {
    pub fn new(u: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if u.nrows() != y.nrows() || u.nrows() == 0 {
            return Err(SysIdError::DimensionMismatch(format!(
                "u has {} samples, y has {}",
                u.nrows(),
                y.nrows()
            )));
        }
        Ok(Self { u, y, x: None })
    }

    pub fn len(&self) -> usize {
        self.u.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.u.nrows() == 0
    }

    pub fn d_u(&self) -> usize {
        self.u.ncols()
    }

    pub fn d_y(&self) -> usize {
        self.y.ncols()
    }
}

/// Simulates `T` steps with iid `N(0, I)` inputs.
///
/// Inputs, process noise and observation noise come from three
/// independent streams of `seed`, so the input sequence does not depend
/// on the noise levels.
pub fn simulate(sys: &StateSpaceSystem, t_len: usize, seed: u64) -> Result<Trajectory> {
    simulate_with_state(sys, t_len, seed, false)
}

pub fn simulate_with_state(
    sys: &StateSpaceSystem,
    t_len: usize,
    seed: u64,
    keep_state: bool,
) -> Result<Trajectory> {
    if t_len == 0 {
        return Err(SysIdError::InvalidArgument("T must be at least 1".into()));
    }
    let u = gaussian_matrix(&mut rng_stream(seed, 0), sys.d_u(), t_len).transpose();
    let xi = noise_sequence(sys.sigma_x(), t_len, seed, 1, "sigma_x")?;
    let eta = noise_sequence(sys.sigma_y(), t_len, seed, 2, "sigma_y")?;
    simulate_inputs(sys, &u, xi.as_ref(), eta.as_ref(), keep_state)
}

fn noise_sequence(
    sigma: &DMatrix<f64>,
    t_len: usize,
    seed: u64,
    stream: u64,
    name: &'static str,
) -> Result<Option<DMatrix<f64>>> {
    if sigma.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    let root = psd_sqrt(sigma, name)?;
    let z = gaussian_matrix(&mut rng_stream(seed, stream), sigma.nrows(), t_len);
    Ok(Some((root * z).transpose()))
}

/// Deterministic recursion for explicit input and noise sequences
/// (rows indexed by time). `xi` row 0 is ignored since `x(0) = 0`.
pub fn simulate_inputs(
    sys: &StateSpaceSystem,
    u: &DMatrix<f64>,
    xi: Option<&DMatrix<f64>>,
    eta: Option<&DMatrix<f64>>,
    keep_state: bool,
) -> Result<Trajectory> {
    let t_len = u.nrows();
    if u.ncols() != sys.d_u() {
        return Err(SysIdError::DimensionMismatch(format!(
            "inputs have {} columns, system expects {}",
            u.ncols(),
            sys.d_u()
        )));
    }
    if let Some(xi) = xi {
        if xi.shape() != (t_len, sys.order()) {
            return Err(SysIdError::DimensionMismatch("process noise shape".into()));
        }
    }
    if let Some(eta) = eta {
        if eta.shape() != (t_len, sys.d_y()) {
            return Err(SysIdError::DimensionMismatch("observation noise shape".into()));
        }
    }
    let mut y = DMatrix::zeros(t_len, sys.d_y());
    let mut states = keep_state.then(|| DMatrix::zeros(t_len, sys.order()));
    let mut x = DVector::zeros(sys.order());
    for t in 0..t_len {
        if t > 0 {
            let u_prev = u.row(t - 1).transpose();
            x = &sys.a * &x + &sys.b * u_prev;
            if let Some(xi) = xi {
                x += xi.row(t).transpose();
            }
        }
        let mut yt = &sys.c * &x + &sys.d * u.row(t).transpose();
        if let Some(eta) = eta {
            yt += eta.row(t).transpose();
        }
        y.row_mut(t).copy_from(&yt.transpose());
        if let Some(s) = states.as_mut() {
            s.row_mut(t).copy_from(&x.transpose());
        }
    }
    Ok(Trajectory {
        u: u.clone(),
        y,
        x: states,
    })
}

/// Smallest horizon at which the impulse response has decayed below
/// `1e-14` in Frobenius norm (capped), and at least `8L`.
pub fn default_tail_horizon(sys: &StateSpaceSystem, horizon_l: usize) -> usize {
    const CAP: usize = 1 << 20;
    let floor = 8 * horizon_l.max(1);
    let mut akb = sys.b.clone();
    let mut t = 1;
    while t < CAP {
        if t >= floor && (&sys.c * &akb).norm() < 1e-14 {
            break;
        }
        akb = &sys.a * akb;
        t += 1;
    }
    t.max(floor)
}

/// Truncation error `‖F*1_[2L,∞)‖_H∞ √d_u + ‖G*1_[2L,∞)‖_H∞ ‖Σ_x^{1/2}‖_F`,
/// with both tails evaluated on the finite window `[2L, horizon_tail)`.
///
/// Each H∞ term is the frequency-grid maximum (a lower estimate within a
/// factor `1 + 4πr/N ≤ 1.5` of the true tail norm).
pub fn truncation_error(sys: &StateSpaceSystem, horizon_l: usize, horizon_tail: usize) -> Result<f64> {
    let start = 2 * horizon_l;
    if horizon_tail <= start {
        return Err(SysIdError::InvalidArgument(format!(
            "tail horizon {horizon_tail} must exceed 2L = {start}"
        )));
    }
    let f_tail = sys.impulse_response(horizon_tail).window(start, horizon_tail - 1);
    let mut total = hinf_grid_norm(&f_tail, f_tail.len()).lower * (sys.d_u() as f64).sqrt();
    let sx_frob = sys.sigma_x.trace().max(0.0).sqrt();
    if sx_frob > 0.0 {
        let g_tail = sys
            .process_noise_response(horizon_tail)
            .window(start, horizon_tail - 1);
        total += hinf_grid_norm(&g_tail, g_tail.len()).lower * sx_frob;
    }
    Ok(total)
}
