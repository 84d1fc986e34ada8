//! Least-squares FIR estimation from a single trajectory.

use nalgebra::Cholesky;

use crate::blockmat::{toeplitz_apply, toeplitz_from_inputs, toeplitz_gram, toeplitz_tr_mul};
use crate::error::{Result, SysIdError};
use crate::impulse::ImpulseResponse;
use crate::lds::Trajectory;
use crate::linalg::symmetric_eig_range;
use crate::spectral::singular_values;

/// Fits with `σ_min(U^T U) < ILL_CONDITIONED_RATIO · T` are rejected.
pub const ILL_CONDITIONED_RATIO: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMethod {
    /// Gram matrix assembled from the Toeplitz structure in `O(T·L·d_u²)`
    /// and solved by Cholesky.
    #[default]
    Structured,
    /// Dense regressor and Householder QR, `O(T·L²·d_u²)`.
    Householder,
}

#[derive(Debug, Clone)]
pub struct FirFit {
    /// Estimated `F(0..fir_len)`.
    pub ir: ImpulseResponse,
    /// `‖M_y − U M_F‖_F`.
    pub residual_norm: f64,
    /// `σ_min(U^T U)`.
    pub gram_sigma_min: f64,
}

/// Minimizer of `Σ_{t<T} ‖y(t) − (F∗u)(t)‖²` over `F` supported on `[0, fir_len)`.
pub fn fir_least_squares(traj: &Trajectory, fir_len: usize) -> Result<FirFit> {
    fir_least_squares_with(traj, fir_len, SolveMethod::default())
}

pub fn fir_least_squares_with(traj: &Trajectory, fir_len: usize, method: SolveMethod) -> Result<FirFit> {
    let t_len = traj.len();
    if fir_len == 0 {
        return Err(SysIdError::InvalidArgument("fir_len must be at least 1".into()));
    }
    if t_len < fir_len {
        return Err(SysIdError::InsufficientData(format!(
            "T = {t_len} is shorter than the FIR length {fir_len}"
        )));
    }
    let lags = fir_len - 1;
    let threshold = ILL_CONDITIONED_RATIO * t_len as f64;
    let ill = |sigma_min: f64| SysIdError::IllConditioned {
        sigma_min,
        threshold,
        t: t_len,
    };

    let (m_f, gram_sigma_min) = match method {
        SolveMethod::Structured => {
            let gram = toeplitz_gram(&traj.u, &traj.u, t_len, lags);
            let (sigma_min, _) = symmetric_eig_range(&gram);
            if !(sigma_min >= threshold) {
                return Err(ill(sigma_min));
            }
            let rhs = toeplitz_tr_mul(&traj.u, &traj.y, t_len, lags);
            let chol = Cholesky::new(gram).ok_or_else(|| ill(sigma_min))?;
            (chol.solve(&rhs), sigma_min)
        }
        SolveMethod::Householder => {
            let u = toeplitz_from_inputs(&traj.u, t_len, lags)?.into_matrix();
            if u.nrows() < u.ncols() {
                return Err(ill(0.0));
            }
            let qr = u.qr();
            let r = qr.r();
            let s = singular_values(&r)?;
            let sigma_min = s[s.len() - 1].powi(2);
            if !(sigma_min >= threshold) {
                return Err(ill(sigma_min));
            }
            let mut qty = traj.y.clone();
            qr.q_tr_mul(&mut qty);
            let rhs = qty.rows(0, r.nrows()).into_owned();
            let m_f = r
                .solve_upper_triangular(&rhs)
                .ok_or_else(|| ill(sigma_min))?;
            (m_f, sigma_min)
        }
    };

    let fitted = toeplitz_apply(&traj.u, &m_f, t_len);
    let residual_norm = (&traj.y - fitted).norm();
    Ok(FirFit {
        ir: ImpulseResponse::from_stacked(&m_f, traj.d_u())?,
        residual_norm,
        gram_sigma_min,
    })
}
