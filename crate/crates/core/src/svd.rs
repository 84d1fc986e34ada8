//! One-sided Jacobi SVD.
//!
//! nalgebra's bidiagonal QR SVD returns wrong factors on some exactly
//! low-rank inputs (noiseless Hankel matrices hit this), so every
//! decomposition in the crate goes through this routine instead.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SysIdError};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `m = U diag(s) V^T`, `s` nonincreasing.
///
/// `U` is `rows × k` and `V` is `cols × k` with `k = min(rows, cols)`; both
/// have orthonormal columns, including those paired with zero singular values.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    if m.nrows() < m.ncols() {
        let t = svd(&m.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(rows, 0),
            s: DVector::zeros(0),
            v: DMatrix::zeros(0, 0),
        });
    }
    let mut w = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    let tol = f64::EPSILON * (rows as f64).sqrt();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols - 1 {
            for q in p + 1..cols {
                let (alpha, beta, gamma) = {
                    let cp = w.column(p);
                    let cq = w.column(q);
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SysIdError::NoConvergence("Jacobi SVD"));
    }

    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let s = DVector::from_iterator(cols, order.iter().map(|&j| norms[j]));
    let v = DMatrix::from_fn(cols, cols, |i, k| v[(i, order[k])]);
    let mut u = DMatrix::zeros(rows, cols);
    let floor = s[0] * f64::EPSILON * rows.max(cols) as f64;
    let mut filled = 0;
    for (k, &j) in order.iter().enumerate() {
        if s[k] > floor && s[k] > 0.0 {
            u.set_column(k, &(w.column(j) / s[k]));
            filled = k + 1;
        }
    }
    complete_orthonormal(&mut u, filled);
    Ok(Svd { u, s, v })
}

pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    svd(m).map(|d| d.s)
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.nrows();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * rows);
    let cp = &mut head[p * rows..(p + 1) * rows];
    let cq = &mut tail[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills columns `filled..` of `u` with an orthonormal complement of the first `filled`.
fn complete_orthonormal(u: &mut DMatrix<f64>, filled: usize) {
    let rows = u.nrows();
    let mut k = filled;
    let mut e = 0;
    while k < u.ncols() && e < rows {
        let mut cand = DVector::<f64>::zeros(rows);
        cand[e] = 1.0;
        e += 1;
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for j in 0..k {
                let proj = u.column(j).dot(&cand);
                cand.axpy(-proj, &u.column(j), 1.0);
            }
        }
        let n = cand.norm();
        if n > 1e-8 {
            u.set_column(k, &(cand / n));
            k += 1;
        }
    }
}
