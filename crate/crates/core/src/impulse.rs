use nalgebra::DMatrix;

use crate::error::{Result, SysIdError};

/// Finite matrix sequence `F(0), F(1), ..., F(len-1)`, each `d_y x d_u`.
///
/// Indices past the end are treated as zero, so differences and norms of
/// responses with different lengths are well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    blocks: Vec<DMatrix<f64>>,
    d_y: usize,
    d_u: usize,
}

impl ImpulseResponse {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| SysIdError::InvalidArgument("impulse response must be non-empty".into()))?;
        let (d_y, d_u) = first.shape();
        if d_y == 0 || d_u == 0 {
            return Err(SysIdError::InvalidArgument(
                "impulse response blocks must be non-empty matrices".into(),
            ));
        }
        if let Some((t, m)) = blocks.iter().enumerate().find(|(_, m)| m.shape() != (d_y, d_u)) {
            return Err(SysIdError::DimensionMismatch(format!(
                "block {t} has shape {:?}, expected {:?}",
                m.shape(),
                (d_y, d_u)
            )));
        }
        Ok(Self { blocks, d_y, d_u })
    }

    pub fn zeros(len: usize, d_y: usize, d_u: usize) -> Self {
        assert!(len >= 1 && d_y >= 1 && d_u >= 1);
        Self {
            blocks: vec![DMatrix::zeros(d_y, d_u); len],
            d_y,
            d_u,
        }
    }

    /// Scalar (SISO) sequence.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect())
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    pub fn d_u(&self) -> usize {
        self.d_u
    }

    pub fn get(&self, t: usize) -> &DMatrix<f64> {
        &self.blocks[t]
    }

    pub fn set(&mut self, t: usize, value: DMatrix<f64>) {
        assert_eq!(value.shape(), (self.d_y, self.d_u));
        self.blocks[t] = value;
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn iter(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.blocks.iter()
    }

    /// Copy with every index outside `[lo, hi]` zeroed (the restriction `F·1_[lo,hi]`).
    pub fn restricted(&self, lo: usize, hi: usize) -> Self {
        let mut out = self.clone();
        for (t, b) in out.blocks.iter_mut().enumerate() {
            if t < lo || t > hi {
                b.fill(0.0);
            }
        }
        out
    }

    /// The entries `F(lo..=hi)` re-indexed to start at zero, zero-padded past the end.
    pub fn window(&self, lo: usize, hi: usize) -> Self {
        assert!(hi >= lo);
        let blocks = (lo..=hi)
            .map(|t| {
                self.blocks
                    .get(t)
                    .cloned()
                    .unwrap_or_else(|| DMatrix::zeros(self.d_y, self.d_u))
            })
            .collect();
        Self {
            blocks,
            d_y: self.d_y,
            d_u: self.d_u,
        }
    }

    /// Truncates or zero-pads to exactly `len` entries.
    pub fn resized(&self, len: usize) -> Self {
        self.window(0, len.max(1) - 1)
    }

    /// `self - other`, over the longer of the two supports.
    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.d_y, self.d_u), (other.d_y, other.d_u));
        let len = self.len().max(other.len());
        let zero = DMatrix::zeros(self.d_y, self.d_u);
        let blocks = (0..len)
            .map(|t| self.blocks.get(t).unwrap_or(&zero) - other.blocks.get(t).unwrap_or(&zero))
            .collect();
        Self {
            blocks,
            d_y: self.d_y,
            d_u: self.d_u,
        }
    }

    /// `sqrt(sum_t ||F(t)||_F^2)`; equals the H2 norm of the sequence.
    pub fn frobenius_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(|b| b.amax()).fold(0.0, f64::max)
    }

    /// Stacked transpose layout `[F(0)^T; F(1)^T; ...]`, shape `(len·d_u) x d_y`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.len() * self.d_u, self.d_y);
        for (t, b) in self.blocks.iter().enumerate() {
            m.view_mut((t * self.d_u, 0), (self.d_u, self.d_y))
                .copy_from(&b.transpose());
        }
        m
    }

    /// Inverse of [`ImpulseResponse::stacked`].
    pub fn from_stacked(m: &DMatrix<f64>, d_u: usize) -> Result<Self> {
        if d_u == 0 || !m.nrows().is_multiple_of(d_u) || m.nrows() == 0 {
            return Err(SysIdError::DimensionMismatch(format!(
                "{} stacked rows is not a positive multiple of d_u = {d_u}",
                m.nrows()
            )));
        }
        let blocks = (0..m.nrows() / d_u)
            .map(|t| m.view((t * d_u, 0), (d_u, m.ncols())).transpose())
            .collect();
        Self::new(blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mixed_shapes() {
        let r = ImpulseResponse::new(vec![DMatrix::zeros(2, 1), DMatrix::zeros(1, 2)]);
        assert!(matches!(r, Err(SysIdError::DimensionMismatch(_))));
        assert!(ImpulseResponse::new(vec![]).is_err());
    }

    #[test]
    fn restriction_and_window() {
        let f = ImpulseResponse::from_scalars(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = f.restricted(1, 2);
        assert_eq!(r.get(0)[(0, 0)], 0.0);
        assert_eq!(r.get(2)[(0, 0)], 3.0);
        assert_eq!(r.get(3)[(0, 0)], 0.0);
        let w = f.window(2, 5);
        assert_eq!(w.len(), 4);
        assert_eq!(w.get(0)[(0, 0)], 3.0);
        assert_eq!(w.get(3)[(0, 0)], 0.0);
    }

    #[test]
    fn norm_of_difference_pads() {
        let f = ImpulseResponse::from_scalars(&[3.0, 4.0]).unwrap();
        let g = ImpulseResponse::from_scalars(&[0.0]).unwrap();
        assert_eq!(f.sub(&g).frobenius_norm(), 5.0);
    }

    #[test]
    fn stacked_round_trip() {
        let f = ImpulseResponse::new(vec![
            DMatrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]),
            DMatrix::from_row_slice(2, 3, &[7., 8., 9., 10., 11., 12.]),
        ])
        .unwrap();
        let m = f.stacked();
        assert_eq!(m.shape(), (6, 2));
        assert_eq!(m[(1, 0)], 2.0);
        assert_eq!(ImpulseResponse::from_stacked(&m, 3).unwrap(), f);
    }
}
