//! Truncated SVD and frequency-domain norms of matrix sequences.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Result, SysIdError};
use crate::impulse::ImpulseResponse;
use crate::svd;

/// Rank-`r` truncated SVD `U diag(S) V^T` with `S` nonincreasing.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// All singular values of `m`, sorted nonincreasing, plus the full thin factors.
pub(crate) fn sorted_svd(m: &DMatrix<f64>) -> Result<TruncatedSvd> {
    let d = svd::svd(m)?;
    Ok(TruncatedSvd {
        u: d.u,
        s: d.s,
        v: d.v,
    })
}

/// Singular values of `m`, nonincreasing.
pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    svd::singular_values(m)
}

/// Best rank-`r` approximation factors of `m` (Eckart–Young).
///
/// Signs are normalized so the largest-magnitude entry of every left
/// singular vector is positive.
pub fn rank_r_svd(m: &DMatrix<f64>, r: usize) -> Result<TruncatedSvd> {
    let max_rank = m.nrows().min(m.ncols());
    if r == 0 || r > max_rank {
        return Err(SysIdError::InvalidArgument(format!(
            "rank {r} outside 1..={max_rank} for a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let full = sorted_svd(m)?;
    let mut u = full.u.columns(0, r).into_owned();
    let mut v = full.v.columns(0, r).into_owned();
    for j in 0..r {
        let col = u.column(j);
        let imax = col.iamax();
        if col[imax] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    Ok(TruncatedSvd {
        u,
        s: full.s.rows(0, r).into_owned(),
        v,
    })
}

/// Uniform grid `ω_j = j / N` on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrequencyGrid {
    n: usize,
}

impl FrequencyGrid {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        Self { n }
    }

    /// Grid of size `⌈8πr⌉`, twice the smallest grid that certifies the bound for a
    /// polynomial with `r` coefficients.
    pub fn for_support(r: usize) -> Self {
        Self::new(((8.0 * PI * r.max(1) as f64).ceil()) as usize)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn omega(&self, j: usize) -> f64 {
        j as f64 / self.n as f64
    }

    /// `1 + 4πr/N`, or `None` when `N < 4πr` and no certificate holds.
    pub fn certified_factor(&self, r: usize) -> Option<f64> {
        let need = 4.0 * PI * r as f64;
        (self.n as f64 >= need).then(|| 1.0 + need / self.n as f64)
    }
}

/// `F̂(ω) = Σ_t F(t) e^{-2πiωt}`.
pub fn transfer_eval(f: &ImpulseResponse, omega: f64) -> DMatrix<Complex<f64>> {
    let mut out = DMatrix::from_element(f.d_y(), f.d_u(), Complex::new(0.0, 0.0));
    for (t, b) in f.iter().enumerate() {
        let z = Complex::from_polar(1.0, -2.0 * PI * omega * t as f64);
        out.zip_apply(b, |o, x| *o += z * x);
    }
    out
}

/// `F̂(ω_j)` for every grid point, with exact integer phase reduction.
pub fn transfer_on_grid(f: &ImpulseResponse, grid: FrequencyGrid) -> Vec<DMatrix<Complex<f64>>> {
    let n = grid.size();
    let twiddle: Vec<Complex<f64>> = (0..n)
        .map(|k| Complex::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
        .collect();
    (0..n)
        .map(|j| {
            let mut out = DMatrix::from_element(f.d_y(), f.d_u(), Complex::new(0.0, 0.0));
            for (t, b) in f.iter().enumerate() {
                let z = twiddle[(j * t) % n];
                out.zip_apply(b, |o, x| *o += z * x);
            }
            out
        })
        .collect()
}

fn complex_sigma_max(m: &DMatrix<Complex<f64>>) -> f64 {
    if m.len() == 1 {
        return m[(0, 0)].norm();
    }
    // [[Re, -Im], [Im, Re]] carries each singular value of `m` twice
    let (r, c) = m.shape();
    let real = DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    crate::linalg::spectral_norm(&real)
}

/// H2 norm, computed in the time domain as `sqrt(Σ_t ||F(t)||_F^2)`.
pub fn h2_norm(f: &ImpulseResponse) -> f64 {
    f.frobenius_norm()
}

/// Grid estimate of the H∞ norm with its interpolation certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfBound {
    /// `max_j σ_max(F̂(ω_j))`, never above the true norm.
    pub lower: f64,
    /// `(1 + 4πr/N) · lower`, never below the true norm.
    pub certified_upper: f64,
    pub grid_size: usize,
    /// Support length used for the certificate.
    pub support: usize,
}

/// Length of the span between the first and last nonzero blocks.
fn support_span(f: &ImpulseResponse) -> usize {
    let nz: Vec<usize> = f
        .iter()
        .enumerate()
        .filter(|(_, b)| b.iter().any(|&x| x != 0.0))
        .map(|(t, _)| t)
        .collect();
    match (nz.first(), nz.last()) {
        (Some(a), Some(b)) => b - a + 1,
        _ => 1,
    }
}

/// H∞ norm bracket on the grid `N = ⌈8πr⌉`.
///
/// `r` is raised to the actual nonzero span of `f` if smaller, so the
/// certificate always holds.
pub fn hinf_grid_norm(f: &ImpulseResponse, r: usize) -> HinfBound {
    let r = r.max(support_span(f));
    let grid = FrequencyGrid::for_support(r);
    let lower = transfer_on_grid(f, grid)
        .iter()
        .map(complex_sigma_max)
        .fold(0.0, f64::max);
    let factor = grid
        .certified_factor(r)
        .expect("grid sized at 8πr always certifies");
    HinfBound {
        lower,
        certified_upper: factor * lower,
        grid_size: grid.size(),
        support: r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, rng_from_seed};

    #[test]
    fn diag_rank_two() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let svd = rank_r_svd(&m, 2).unwrap();
        assert_eq!(svd.s.as_slice(), &[3.0, 2.0]);
        let rec = svd.reconstruct();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 0.0]));
        assert!((rec - want).amax() < 1e-14);
    }

    #[test]
    fn low_rank_is_fixed() {
        let mut rng = rng_from_seed(4);
        let m = gaussian_matrix(&mut rng, 12, 3) * gaussian_matrix(&mut rng, 3, 9);
        let svd = rank_r_svd(&m, 3).unwrap();
        assert!((svd.reconstruct() - &m).norm() <= 1e-10 * m.norm());
        assert!((svd.u.transpose() * &svd.u - DMatrix::identity(3, 3)).amax() < 1e-10);
        assert!((svd.v.transpose() * &svd.v - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn eckart_young_spectral_error() {
        let mut rng = rng_from_seed(5);
        let m = gaussian_matrix(&mut rng, 20, 20);
        let s = singular_values(&m).unwrap();
        let svd = rank_r_svd(&m, 5).unwrap();
        let resid = singular_values(&(svd.reconstruct() - &m)).unwrap();
        assert!((resid[0] - s[5]).abs() <= 1e-9 * s[0]);
    }

    #[test]
    fn sign_convention() {
        let mut rng = rng_from_seed(6);
        let m = gaussian_matrix(&mut rng, 7, 5);
        let svd = rank_r_svd(&m, 3).unwrap();
        for j in 0..3 {
            let c = svd.u.column(j);
            assert!(c[c.iamax()] > 0.0);
        }
        let neg = rank_r_svd(&(-&m), 3).unwrap();
        assert!((neg.u - &svd.u).amax() < 1e-10);
    }

    #[test]
    fn rank_out_of_range() {
        let m = DMatrix::<f64>::zeros(3, 2);
        assert!(rank_r_svd(&m, 0).is_err());
        assert!(rank_r_svd(&m, 3).is_err());
    }

    #[test]
    fn transfer_of_delta_is_constant() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let f = ImpulseResponse::new(vec![m.clone()]).unwrap();
        for &w in &[0.0, 0.13, 0.5] {
            let h = transfer_eval(&f, w);
            assert!(h.iter().zip(m.iter()).all(|(a, b)| (a.re - b).abs() < 1e-15 && a.im == 0.0));
        }
    }

    #[test]
    fn transfer_cancels_at_nyquist() {
        let f = ImpulseResponse::from_scalars(&[1.0, 1.0]).unwrap();
        assert!(transfer_eval(&f, 0.5)[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn grid_matches_direct_dft() {
        let mut rng = rng_from_seed(7);
        let f = ImpulseResponse::new((0..9).map(|_| gaussian_matrix(&mut rng, 2, 3)).collect())
            .unwrap();
        let grid = FrequencyGrid::new(16);
        let fast = transfer_on_grid(&f, grid);
        for (j, h) in fast.iter().enumerate() {
            // direct summation oracle
            for r in 0..2 {
                for c in 0..3 {
                    let mut acc = Complex::new(0.0, 0.0);
                    for t in 0..9 {
                        let ang = -2.0 * PI * (j * t) as f64 / 16.0;
                        acc += Complex::new(ang.cos(), ang.sin()) * f.get(t)[(r, c)];
                    }
                    assert!((acc - h[(r, c)]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn h2_norm_examples() {
        assert_eq!(h2_norm(&ImpulseResponse::from_scalars(&[0.0]).unwrap()), 0.0);
        assert_eq!(h2_norm(&ImpulseResponse::from_scalars(&[3.0, 4.0]).unwrap()), 5.0);
    }

    #[test]
    fn h2_matches_grid_parseval() {
        let mut rng = rng_from_seed(8);
        let f = ImpulseResponse::new((0..11).map(|_| gaussian_matrix(&mut rng, 3, 2)).collect())
            .unwrap();
        let grid = FrequencyGrid::new(17);
        let mean_sq: f64 = transfer_on_grid(&f, grid)
            .iter()
            .map(|h| h.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / 17.0;
        let h2 = h2_norm(&f);
        assert!((mean_sq.sqrt() - h2).abs() <= 1e-10 * h2);
    }

    #[test]
    fn hinf_of_delta() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let f = ImpulseResponse::new(vec![m]).unwrap();
        let b = hinf_grid_norm(&f, 1);
        assert!((b.lower - 2.0).abs() < 1e-14);
        let factor = 1.0 + 4.0 * PI / b.grid_size as f64;
        assert!((b.certified_upper - 2.0 * factor).abs() < 1e-12);
    }

    #[test]
    fn hinf_of_two_tap_average() {
        let f = ImpulseResponse::from_scalars(&[1.0, 1.0]).unwrap();
        let b = hinf_grid_norm(&f, 2);
        assert!((b.lower - 2.0).abs() < 1e-14);
        assert!(b.certified_upper <= 4.0);
    }

    #[test]
    fn hinf_brackets_dense_sweep() {
        let mut rng = rng_from_seed(9);
        for _ in 0..5 {
            let g = gaussian_matrix(&mut rng, 8, 1);
            let f = ImpulseResponse::from_scalars(g.as_slice()).unwrap();
            let b = hinf_grid_norm(&f, 8);
            let dense = (0..100_000)
                .map(|j| transfer_eval(&f, j as f64 / 1e5)[(0, 0)].norm())
                .fold(0.0, f64::max);
            assert!(b.lower <= dense + 1e-12);
            assert!(dense <= b.certified_upper);
            assert!(b.certified_upper <= 1.5 * b.lower + 1e-12);
        }
    }
}
