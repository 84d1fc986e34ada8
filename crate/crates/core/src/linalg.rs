//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, Schur, SymmetricEigen};

use crate::error::{Result, SysIdError};
use crate::rng::{gaussian_matrix, SysRng};

/// Largest eigenvalue modulus, via a real Schur decomposition.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    match Schur::try_new(a.clone(), f64::EPSILON, 10_000) {
        Some(schur) => Ok(schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)),
        // QR iterations stall on some defective matrices (e.g. shift registers)
        None => gelfand_radius(a),
    }
}

/// `lim ‖A^k‖^{1/k}` along `k = 2^j`, with the scale tracked in log space.
fn gelfand_radius(a: &DMatrix<f64>) -> Result<f64> {
    let mut b = a.clone();
    let mut log_scale = 0.0;
    let mut estimate = f64::NAN;
    for j in 0..64 {
        let norm = b.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        b /= norm;
        log_scale += norm.ln() / 2f64.powi(j);
        estimate = log_scale.exp();
        b = &b * &b;
    }
    if estimate.is_finite() {
        Ok(estimate)
    } else {
        Err(SysIdError::NoConvergence("spectral radius"))
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    crate::svd::singular_values(m)
        .map(|s| s[0])
        .unwrap_or_else(|_| m.singular_values().max())
}

/// Extremal eigenvalues `(min, max)` of a symmetric matrix.
pub fn symmetric_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = m.clone().symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// Symmetric square root of a PSD matrix. Tiny negative eigenvalues from
/// round-off are clamped; anything below `-tol` is rejected.
pub fn psd_sqrt(m: &DMatrix<f64>, name: &'static str) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(SysIdError::DimensionMismatch(format!("{name} must be square")));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(SysIdError::NotPsd { name, min_eig: f64::NAN });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min_eig = eig.eigenvalues.min();
    if min_eig < -1e-10 * scale {
        return Err(SysIdError::NotPsd { name, min_eig });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Random matrix with orthonormal columns (if `rows >= cols`) or rows
/// (otherwise), Haar-distributed via sign-corrected QR of a Gaussian matrix.
pub fn random_orthonormal(rng: &mut SysRng, rows: usize, cols: usize) -> DMatrix<f64> {
    if rows < cols {
        return random_orthonormal(rng, cols, rows).transpose();
    }
    let g = gaussian_matrix(rng, rows, cols);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Horizontal stacking of equally tall matrices.
pub fn hstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        out.view_mut((0, c), (rows, p.ncols())).copy_from(*p);
        c += p.ncols();
    }
    out
}

/// Vertical stacking of equally wide matrices.
pub fn vstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        out.view_mut((r, 0), (p.nrows(), cols)).copy_from(*p);
        r += p.nrows();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn spectral_radius_of_rotation_scaled() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&a).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn defective_matrices() {
        let mut shift = DMatrix::zeros(6, 6);
        for i in 1..6 {
            shift[(i, i - 1)] = 1.0;
        }
        assert!(spectral_radius(&shift).unwrap() < 1e-6);
        let g = gelfand_radius(&DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, -0.3])).unwrap();
        assert!((g - 0.5).abs() < 1e-9);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = rng_from_seed(1);
        let g = gaussian_matrix(&mut rng, 4, 2);
        let s = &g * g.transpose();
        let r = psd_sqrt(&s, "s").unwrap();
        assert!((&r * &r - &s).amax() < 1e-10);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(psd_sqrt(&s, "s"), Err(SysIdError::NotPsd { .. })));
    }

    #[test]
    fn orthonormal_factors() {
        let mut rng = rng_from_seed(2);
        let tall = random_orthonormal(&mut rng, 5, 3);
        assert!((tall.transpose() * &tall - DMatrix::identity(3, 3)).amax() < 1e-12);
        let wide = random_orthonormal(&mut rng, 2, 4);
        assert!((&wide * wide.transpose() - DMatrix::identity(2, 2)).amax() < 1e-12);
    }
}
