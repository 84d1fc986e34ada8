//! Ho-Kalman realization of state-space matrices from Markov parameters,
//! and the parameter-error metrics used to assess it.
//!
//! Steps, for horizon `L` and order `d`:
//!
//! 1. `H = Hankel_{L×L}(F)` from `F(1..2L-1)`; `H⁻` is its first `L-1` block
//!    columns and `H⁺` its last `L-1`.
//! 2. `(U, S, V)` = rank-`d` SVD of `H⁻`; `O = U S^{1/2}`, `Q = S^{1/2} V^T`.
//! 3. `Ĉ` = first block row of `O`, `B̂` = first block column of `Q`,
//!    `Â = O† H⁺ Q†` with `O† = S^{-1/2} U^T`, `Q† = V S^{-1/2}`, `D̂ = F(0)`.

use nalgebra::{DMatrix, DVector};

use crate::blockmat::hankel_from_ir;
use crate::error::{Result, SysIdError};
use crate::impulse::ImpulseResponse;
use crate::lds::{markov_parameters, StateSpaceSystem};
use crate::linalg::{hstack, spectral_radius, vstack};
use crate::spectral::rank_r_svd;

/// Relative threshold on `σ_d(H⁻)/σ_1(H⁻)` below which the order is deficient.
pub const ORDER_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub c_hat: DMatrix<f64>,
    pub d_hat: DMatrix<f64>,
    /// `σ_d` of `H⁻`, the smallest retained singular value.
    pub sigma_min_hminus: f64,
}

impl Realization {
    pub fn order(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn impulse_response(&self, horizon: usize) -> ImpulseResponse {
        markov_parameters(&self.a_hat, &self.b_hat, &self.c_hat, &self.d_hat, horizon)
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.a_hat)
    }

    /// `(W^T Â W, W^T B̂, Ĉ W)` for orthogonal `W`.
    pub fn rotated(&self, w: &DMatrix<f64>) -> Self {
        Self {
            a_hat: w.transpose() * &self.a_hat * w,
            b_hat: w.transpose() * &self.b_hat,
            c_hat: &self.c_hat * w,
            d_hat: self.d_hat.clone(),
            sigma_min_hminus: self.sigma_min_hminus,
        }
    }

    /// Extended observability matrix `[Ĉ; ĈÂ; ...; ĈÂ^{rows-1}]`.
    pub fn observability(&self, rows: usize) -> DMatrix<f64> {
        observability(&self.a_hat, &self.c_hat, rows)
    }

    /// Extended controllability matrix `[B̂, ÂB̂, ..., Â^{cols-1}B̂]`.
    pub fn controllability(&self, cols: usize) -> DMatrix<f64> {
        controllability(&self.a_hat, &self.b_hat, cols)
    }
}

fn observability(a: &DMatrix<f64>, c: &DMatrix<f64>, rows: usize) -> DMatrix<f64> {
    let mut blocks = Vec::with_capacity(rows);
    let mut ca = c.clone();
    for _ in 0..rows {
        let next = &ca * a;
        blocks.push(ca);
        ca = next;
    }
    vstack(&blocks.iter().collect::<Vec<_>>())
}

fn controllability(a: &DMatrix<f64>, b: &DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    let mut blocks = Vec::with_capacity(cols);
    let mut ab = b.clone();
    for _ in 0..cols {
        let next = a * &ab;
        blocks.push(ab);
        ab = next;
    }
    hstack(&blocks.iter().collect::<Vec<_>>())
}

/// Ho-Kalman with `T₁ = L` block rows and `T₂ = L - 1` block columns.
pub fn ho_kalman(f: &ImpulseResponse, horizon: usize, order: usize) -> Result<Realization> {
    let (dy, du) = (f.d_y(), f.d_u());
    if horizon < 2 {
        return Err(SysIdError::InvalidArgument("Ho-Kalman needs L >= 2".into()));
    }
    let max_order = (horizon * dy).min((horizon - 1) * du);
    if order == 0 || order > max_order {
        return Err(SysIdError::InvalidArgument(format!(
            "order {order} outside 1..={max_order} for L = {horizon}"
        )));
    }
    let h = hankel_from_ir(f, horizon, horizon, 1)?;
    let cols = (horizon - 1) * du;
    let h_minus = h.matrix().columns(0, cols).into_owned();
    let h_plus = h.matrix().columns(du, cols).into_owned();

    let svd = rank_r_svd(&h_minus, order)?;
    let sigma_max = svd.s[0];
    let sigma_d = svd.s[order - 1];
    if !(sigma_d > ORDER_TOLERANCE * sigma_max) {
        return Err(SysIdError::OrderDeficient {
            order,
            sigma: sigma_d,
            sigma_max,
        });
    }
    let root: DVector<f64> = svd.s.map(f64::sqrt);
    let inv_root: DVector<f64> = root.map(|r| 1.0 / r);

    let obs = &svd.u * DMatrix::from_diagonal(&root);
    let ctrb = DMatrix::from_diagonal(&root) * svd.v.transpose();
    let obs_pinv = DMatrix::from_diagonal(&inv_root) * svd.u.transpose();
    let ctrb_pinv = &svd.v * DMatrix::from_diagonal(&inv_root);

    Ok(Realization {
        a_hat: obs_pinv * h_plus * ctrb_pinv,
        b_hat: ctrb.columns(0, du).into_owned(),
        c_hat: obs.rows(0, dy).into_owned(),
        d_hat: f.get(0).clone(),
        sigma_min_hminus: sigma_d,
    })
}

/// Balanced (Ho-Kalman) realization of a known system, from its exact
/// Markov parameters on `[0, 2L-1]`.
pub fn balanced_realization(sys: &StateSpaceSystem, horizon: usize) -> Result<Realization> {
    ho_kalman(&sys.impulse_response(2 * horizon), horizon, sys.order())
}

#[derive(Debug, Clone)]
pub struct Alignment {
    /// Orthogonal `W` mapping the realization onto the reference basis.
    pub w: DMatrix<f64>,
    /// `‖A − W Â W^T‖_F`
    pub err_a: f64,
    /// `‖B − W B̂‖_F`
    pub err_b: f64,
    /// `‖C − Ĉ W^T‖_F`
    pub err_c: f64,
}

/// Orthogonal Procrustes alignment of `real` against the balanced
/// realization of `reference`.
///
/// `W = argmin ‖O* W − Ô‖² + ‖W^T Q* − Q̂‖²` over orthogonal `W`, solved in
/// closed form from the SVD of `O*^T Ô + Q* Q̂^T`; `O`, `Q` are the extended
/// observability (`L` block rows) and controllability (`L-1` block columns)
/// matrices.
pub fn align_similarity(reference: &StateSpaceSystem, real: &Realization, horizon: usize) -> Result<Alignment> {
    let refb = balanced_realization(reference, horizon)?;
    if real.order() != refb.order() {
        return Err(SysIdError::DimensionMismatch(format!(
            "realization has order {}, reference {}",
            real.order(),
            refb.order()
        )));
    }
    let o_ref = refb.observability(horizon);
    let q_ref = refb.controllability(horizon - 1);
    let o_hat = real.observability(horizon);
    let q_hat = real.controllability(horizon - 1);
    let m = o_ref.transpose() * o_hat + q_ref * q_hat.transpose();
    let svd = crate::svd::svd(&m)?;
    let w = svd.u * svd.v.transpose();
    Ok(Alignment {
        err_a: (&refb.a_hat - &w * &real.a_hat * w.transpose()).norm(),
        err_b: (&refb.b_hat - &w * &real.b_hat).norm(),
        err_c: (&refb.c_hat - &real.c_hat * w.transpose()).norm(),
        w,
    })
}

/// Similarity-invariant distance `‖IR(real) − IR(reference)‖_F` on `[0, horizon)`.
pub fn ir_distance(reference: &StateSpaceSystem, real: &Realization, horizon: usize) -> f64 {
    real.impulse_response(horizon)
        .sub(&reference.impulse_response(horizon))
        .frobenius_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lds::random_system;
    use crate::linalg::random_orthonormal;
    use crate::rng::rng_from_seed;

    #[test]
    fn exact_on_exact_markov_parameters() {
        for (d, du, dy) in [(1, 1, 1), (2, 1, 2), (3, 2, 2), (5, 3, 3), (3, 1, 1)] {
            let sys = random_system(d, du, dy, 0.9, (7 * d + du + 3 * dy) as u64).unwrap();
            let l = 12;
            let f = sys.impulse_response(2 * l);
            let real = ho_kalman(&f, l, d).unwrap();
            assert!(real.impulse_response(2 * l).sub(&f).max_abs() < 1e-8, "d={d}");
        }
    }

    #[test]
    fn scalar_realization_is_unique() {
        let sys = StateSpaceSystem::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let real = ho_kalman(&sys.impulse_response(8), 4, 1).unwrap();
        assert!((real.a_hat[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((real.c_hat[(0, 0)] * real.b_hat[(0, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn order_deficiency_is_detected() {
        let sys = random_system(2, 1, 1, 0.8, 3).unwrap();
        let f = sys.impulse_response(16);
        assert!(matches!(ho_kalman(&f, 8, 4), Err(SysIdError::OrderDeficient { .. })));
        assert!(ho_kalman(&f, 8, 0).is_err());
        assert!(ho_kalman(&f, 8, 9).is_err());
        assert!(ho_kalman(&f, 9, 2).is_err());
    }

    #[test]
    fn self_alignment_is_identity() {
        let sys = random_system(3, 2, 2, 0.9, 5).unwrap();
        let real = balanced_realization(&sys, 10).unwrap();
        let al = align_similarity(&sys, &real, 10).unwrap();
        assert!(al.err_a <= 1e-9 && al.err_b <= 1e-9 && al.err_c <= 1e-9);
        assert!((al.w.transpose() * &al.w - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn planted_rotation_is_recovered() {
        let sys = random_system(4, 2, 3, 0.9, 6).unwrap();
        let real = balanced_realization(&sys, 10).unwrap();
        let w0 = random_orthonormal(&mut rng_from_seed(1), 4, 4);
        let rotated = real.rotated(&w0);
        let al = align_similarity(&sys, &rotated, 10).unwrap();
        assert!(al.err_a <= 1e-8 && al.err_b <= 1e-8 && al.err_c <= 1e-8);
        assert!((&al.w - &w0).amax() < 1e-8);
        assert!((al.w.transpose() * &al.w - DMatrix::identity(4, 4)).amax() < 1e-10);
    }

    #[test]
    fn ir_distance_is_similarity_invariant() {
        let sys = random_system(3, 2, 2, 0.9, 7).unwrap();
        let real = balanced_realization(&sys, 10).unwrap();
        let base = ir_distance(&sys, &real, 40);
        let mut rng = rng_from_seed(2);
        let w = crate::rng::gaussian_matrix(&mut rng, 3, 3) + DMatrix::identity(3, 3) * 3.0;
        let conj = sys.similarity(&w).unwrap();
        assert!((ir_distance(&conj, &real, 40) - base).abs() < 1e-10);
    }
}
