//! Block Hankel and block Toeplitz matrices built from matrix sequences.

use nalgebra::DMatrix;

use crate::error::{Result, SysIdError};
use crate::impulse::ImpulseResponse;

/// Dense `a x b` grid of `d_y x d_u` blocks. When built from a sequence,
/// block `(i, j)` (0-based) holds `F(start + i + j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockHankel {
    block_rows: usize,
    block_cols: usize,
    d_y: usize,
    d_u: usize,
    start: usize,
    mat: DMatrix<f64>,
}

impl BlockHankel {
    /// Wraps an arbitrary matrix with the block layout of a Hankel matrix,
    /// e.g. a low-rank approximation that is no longer exactly Hankel.
    pub fn from_matrix(
        mat: DMatrix<f64>,
        block_rows: usize,
        block_cols: usize,
        d_y: usize,
        d_u: usize,
        start: usize,
    ) -> Result<Self> {
        if mat.shape() != (block_rows * d_y, block_cols * d_u) {
            return Err(SysIdError::DimensionMismatch(format!(
                "matrix {:?} does not fit {block_rows}x{block_cols} blocks of {d_y}x{d_u}",
                mat.shape()
            )));
        }
        Ok(Self {
            block_rows,
            block_cols,
            d_y,
            d_u,
            start,
            mat,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn block_cols(&self) -> usize {
        self.block_cols
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Block `(i, j)`, 0-based.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.mat
            .view((i * self.d_y, j * self.d_u), (self.d_y, self.d_u))
            .into_owned()
    }

    /// Range of sequence indices covered by the anti-diagonals.
    pub fn index_range(&self) -> (usize, usize) {
        (self.start, self.start + self.block_rows + self.block_cols - 2)
    }

    /// Number of blocks on the anti-diagonal holding `F(t)`.
    pub fn antidiagonal_len(&self, t: usize) -> usize {
        let (lo, hi) = self.index_range();
        if t < lo || t > hi {
            return 0;
        }
        let s = t - lo;
        let (a, b) = (self.block_rows, self.block_cols);
        (s + 1).min(a).min(b).min(a + b - 1 - s)
    }
}

/// `Hankel_{a×b}(F)` with block `(1,1)` holding `F(start)`.
pub fn hankel_from_ir(f: &ImpulseResponse, a: usize, b: usize, start: usize) -> Result<BlockHankel> {
    if a == 0 || b == 0 {
        return Err(SysIdError::InvalidArgument("Hankel needs at least one block row and column".into()));
    }
    let last = start + a + b - 2;
    if last >= f.len() {
        return Err(SysIdError::InsufficientData(format!(
            "{a}x{b} Hankel from index {start} needs F up to index {last}, have {} entries",
            f.len()
        )));
    }
    let (dy, du) = (f.d_y(), f.d_u());
    let mut mat = DMatrix::zeros(a * dy, b * du);
    for i in 0..a {
        for j in 0..b {
            mat.view_mut((i * dy, j * du), (dy, du))
                .copy_from(f.get(start + i + j));
        }
    }
    BlockHankel::from_matrix(mat, a, b, dy, du, start)
}

/// Mean of the blocks on the anti-diagonal that holds `F(t)`.
pub fn antidiagonal_average(r: &BlockHankel, t: usize) -> Result<DMatrix<f64>> {
    let count = r.antidiagonal_len(t);
    if count == 0 {
        let (lo, hi) = r.index_range();
        return Err(SysIdError::InvalidArgument(format!(
            "index {t} outside anti-diagonal range [{lo}, {hi}]"
        )));
    }
    let s = t - r.start;
    let i_lo = s.saturating_sub(r.block_cols - 1);
    let i_hi = s.min(r.block_rows - 1);
    debug_assert_eq!(i_hi + 1 - i_lo, count);
    // running mean: a constant anti-diagonal averages to its value exactly
    let mut mean = DMatrix::zeros(r.d_y, r.d_u);
    for (k, i) in (i_lo..=i_hi).enumerate() {
        let blk = r.mat.view((i * r.d_y, (s - i) * r.d_u), (r.d_y, r.d_u));
        let step = (blk - &mean) / (k + 1) as f64;
        mean += step;
    }
    Ok(mean)
}

/// Lower-triangular block Toeplitz matrix, block `(i, j)` = `F(i - j)` for `i >= j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockToeplitz {
    block_rows: usize,
    block_cols: usize,
    mat: DMatrix<f64>,
}

impl BlockToeplitz {
    pub fn from_blocks(seq: &[DMatrix<f64>], a: usize, b: usize) -> Result<Self> {
        let first = seq
            .first()
            .ok_or_else(|| SysIdError::InvalidArgument("empty block sequence".into()))?;
        let (m, n) = first.shape();
        let mut mat = DMatrix::zeros(a * m, b * n);
        for i in 0..a {
            for j in 0..=i.min(b.saturating_sub(1)) {
                if let Some(blk) = seq.get(i - j) {
                    mat.view_mut((i * m, j * n), (m, n)).copy_from(blk);
                }
            }
        }
        Ok(Self {
            block_rows: a,
            block_cols: b,
            mat,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn block_cols(&self) -> usize {
        self.block_cols
    }
}

/// Regressor `U = Toep_{T×(L+1)}(u(t)^T)`: row `t` is
/// `[u(t)^T, u(t-1)^T, ..., u(t-L)^T]` with `u(s) = 0` for `s < 0`.
pub fn toeplitz_from_inputs(u: &DMatrix<f64>, t_len: usize, lags: usize) -> Result<BlockToeplitz> {
    if u.nrows() < t_len {
        return Err(SysIdError::InsufficientData(format!(
            "need {t_len} input samples, have {}",
            u.nrows()
        )));
    }
    let rows: Vec<DMatrix<f64>> = (0..t_len)
        .map(|t| DMatrix::from_row_slice(1, u.ncols(), u.row(t).transpose().as_slice()))
        .collect();
    BlockToeplitz::from_blocks(&rows, t_len, lags + 1)
}

/// `Σ_{s=0}^{n-1} p(s) q(s+shift)^T` into `out`, where `p`, `q` are time-major
/// column-major matrices.
fn lagged_cross(p: &DMatrix<f64>, q: &DMatrix<f64>, shift: usize, n: usize, out: &mut DMatrix<f64>) {
    let tp = p.nrows();
    let tq = q.nrows();
    let ps = p.as_slice();
    let qs = q.as_slice();
    for a in 0..p.ncols() {
        let pa = &ps[a * tp..a * tp + n];
        for b in 0..q.ncols() {
            let qb = &qs[b * tq + shift..b * tq + shift + n];
            out[(a, b)] = pa.iter().zip(qb).map(|(x, y)| x * y).sum();
        }
    }
}

fn add_outer(out: &mut DMatrix<f64>, p: &DMatrix<f64>, s: usize, q: &DMatrix<f64>, r: usize, sign: f64) {
    for a in 0..p.ncols() {
        let x = p[(s, a)] * sign;
        for b in 0..q.ncols() {
            out[(a, b)] += x * q[(r, b)];
        }
    }
}

/// `U^T W` for two input Toeplitz regressors with `lags + 1` block columns,
/// in `O(T·L·d_u·d_w)` without forming either matrix.
///
/// Block `(j, k)` is `Σ_{t<T} u(t-j) w(t-k)^T`.
pub fn toeplitz_gram(u: &DMatrix<f64>, w: &DMatrix<f64>, t_len: usize, lags: usize) -> DMatrix<f64> {
    assert!(u.nrows() >= t_len && w.nrows() >= t_len);
    let (du, dw) = (u.ncols(), w.ncols());
    let u = u.rows(0, t_len).into_owned();
    let w = w.rows(0, t_len).into_owned();
    let nb = lags + 1;
    let mut g = DMatrix::zeros(nb * du, nb * dw);
    let mut acc = DMatrix::zeros(du, dw);
    let mut acc_t = DMatrix::zeros(dw, du);
    for delta in 0..nb.min(t_len) {
        // j = k + delta: Σ_{s=0}^{T-1-j} u(s) w(s+delta)^T
        lagged_cross(&u, &w, delta, t_len - delta, &mut acc);
        // j = k - delta: Σ_{s=0}^{T-1-k} u(s+delta) w(s)^T
        lagged_cross(&w, &u, delta, t_len - delta, &mut acc_t);
        for k in 0..nb - delta {
            if k > 0 {
                // drop s = T - delta - k from both running sums
                match (t_len - delta).checked_sub(k) {
                    Some(s) => {
                        add_outer(&mut acc, &u, s, &w, s + delta, -1.0);
                        add_outer(&mut acc_t, &w, s, &u, s + delta, -1.0);
                    }
                    None => {
                        acc.fill(0.0);
                        acc_t.fill(0.0);
                    }
                }
            }
            let j = k + delta;
            g.view_mut((j * du, k * dw), (du, dw)).copy_from(&acc);
            if delta > 0 {
                g.view_mut((k * du, j * dw), (du, dw))
                    .copy_from(&acc_t.transpose());
            }
        }
    }
    g
}

/// `U^T Y` for the input Toeplitz regressor and time-major outputs `y`;
/// block `k` (rows `k·d_u..`) is `Σ_t u(t-k) y(t)^T`.
pub fn toeplitz_tr_mul(u: &DMatrix<f64>, y: &DMatrix<f64>, t_len: usize, lags: usize) -> DMatrix<f64> {
    assert!(u.nrows() >= t_len && y.nrows() >= t_len);
    let u = u.rows(0, t_len).into_owned();
    let y = y.rows(0, t_len).into_owned();
    let du = u.ncols();
    let mut out = DMatrix::zeros((lags + 1) * du, y.ncols());
    let mut acc = DMatrix::zeros(du, y.ncols());
    for k in 0..=lags.min(t_len - 1) {
        lagged_cross(&u, &y, k, t_len - k, &mut acc);
        out.view_mut((k * du, 0), (du, y.ncols())).copy_from(&acc);
    }
    out
}

/// `U · M`, i.e. the convolution `Σ_k M_k^T u(t-k)` as a `T x m` matrix,
/// for `M` stacked as `(L+1)·d_u x m`.
pub fn toeplitz_apply(u: &DMatrix<f64>, m: &DMatrix<f64>, t_len: usize) -> DMatrix<f64> {
    let du = u.ncols();
    assert_eq!(m.nrows() % du, 0);
    let nb = m.nrows() / du;
    let mut out = DMatrix::zeros(t_len, m.ncols());
    for k in 0..nb.min(t_len) {
        let mk = m.rows(k * du, du);
        let shifted = u.rows(0, t_len - k);
        let contrib = shifted * mk;
        let mut dst = out.rows_mut(k, t_len - k);
        dst += contrib;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, rng_from_seed};

    fn scalars(v: &[f64]) -> ImpulseResponse {
        ImpulseResponse::from_scalars(v).unwrap()
    }

    #[test]
    fn scalar_hankel() {
        let h = hankel_from_ir(&scalars(&[0.0, 1.0, 2.0, 3.0]), 2, 2, 1).unwrap();
        assert_eq!(h.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
        let z = hankel_from_ir(&scalars(&[0.0; 6]), 3, 2, 1).unwrap();
        assert_eq!(z.matrix().amax(), 0.0);
        assert!(matches!(
            hankel_from_ir(&scalars(&[0.0, 1.0, 2.0]), 2, 2, 1),
            Err(SysIdError::InsufficientData(_))
        ));
    }

    #[test]
    fn scalar_toeplitz() {
        let u = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let t = toeplitz_from_inputs(&u, 3, 1).unwrap();
        assert_eq!(
            t.matrix(),
            &DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, 2.0])
        );
        let zero = toeplitz_from_inputs(&DMatrix::zeros(4, 2), 4, 2).unwrap();
        assert_eq!(zero.matrix().amax(), 0.0);
    }

    #[test]
    fn toeplitz_times_fir_is_convolution() {
        let mut rng = rng_from_seed(1);
        let (t_len, lags, du, dy) = (25, 4, 2, 3);
        let u = gaussian_matrix(&mut rng, t_len, du);
        let f = ImpulseResponse::new((0..=lags).map(|_| gaussian_matrix(&mut rng, dy, du)).collect())
            .unwrap();
        let big = toeplitz_from_inputs(&u, t_len, lags).unwrap();
        let y = big.matrix() * f.stacked();
        let fast = toeplitz_apply(&u, &f.stacked(), t_len);
        for t in 0..t_len {
            let mut yt = nalgebra::DVector::zeros(dy);
            for k in 0..=lags.min(t) {
                yt += f.get(k) * u.row(t - k).transpose();
            }
            assert!((yt.transpose() - y.row(t)).amax() < 1e-12);
            assert!((fast.row(t) - y.row(t)).amax() < 1e-12);
        }
    }

    #[test]
    fn structured_products_match_dense() {
        let mut rng = rng_from_seed(2);
        for &(t_len, lags, du, dw) in &[(30, 5, 2, 3), (7, 9, 1, 1), (12, 0, 3, 2), (40, 39, 1, 2)] {
            let u = gaussian_matrix(&mut rng, t_len, du);
            let w = gaussian_matrix(&mut rng, t_len, dw);
            let uu = toeplitz_from_inputs(&u, t_len, lags).unwrap().into_matrix();
            let ww = toeplitz_from_inputs(&w, t_len, lags).unwrap().into_matrix();
            let dense = uu.transpose() * &ww;
            let fast = toeplitz_gram(&u, &w, t_len, lags);
            assert!((dense - fast).amax() < 1e-10, "gram {t_len} {lags}");
            let tr = toeplitz_tr_mul(&u, &w, t_len, lags);
            assert!((uu.transpose() * &w - tr).amax() < 1e-10, "tr_mul {t_len} {lags}");
        }
    }

    #[test]
    fn average_recovers_exact_hankel() {
        let mut rng = rng_from_seed(3);
        let f = ImpulseResponse::new((0..12).map(|_| gaussian_matrix(&mut rng, 2, 3)).collect())
            .unwrap();
        let h = hankel_from_ir(&f, 4, 5, 2).unwrap();
        for t in 2..=9 {
            assert_eq!(antidiagonal_average(&h, t).unwrap(), *f.get(t));
        }
        assert!(antidiagonal_average(&h, 1).is_err());
        assert!(antidiagonal_average(&h, 10).is_err());
    }

    #[test]
    fn average_of_middle_antidiagonal() {
        let r = BlockHankel::from_matrix(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]),
            2,
            2,
            1,
            1,
            1,
        )
        .unwrap();
        assert_eq!(antidiagonal_average(&r, 2).unwrap()[(0, 0)], 3.0);
        assert_eq!(antidiagonal_average(&r, 1).unwrap()[(0, 0)], 1.0);
        assert_eq!(antidiagonal_average(&r, 3).unwrap()[(0, 0)], 3.0);
    }

    #[test]
    fn average_matches_enumeration() {
        let mut rng = rng_from_seed(4);
        let m = gaussian_matrix(&mut rng, 4, 4);
        let r = BlockHankel::from_matrix(m.clone(), 4, 4, 1, 1, 1).unwrap();
        for t in 1..=7 {
            // enumerate all (i, j), 1-based, with i + j - 1 = t
            let mut vals = vec![];
            for i in 1..=4 {
                for j in 1..=4 {
                    if i + j - 1 == t {
                        vals.push(m[(i - 1, j - 1)]);
                    }
                }
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert_eq!(r.antidiagonal_len(t), vals.len());
            assert!((antidiagonal_average(&r, t).unwrap()[(0, 0)] - mean).abs() < 1e-15);
        }
    }
}
