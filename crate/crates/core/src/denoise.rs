//! Multi-scale low-rank Hankel denoising of a raw impulse-response estimate.
//!
//! At scale `ℓ` the rank-`d` SVD of `Hankel_{ℓ×ℓ}(F)` (built from
//! `F(1..2ℓ-1)`) is averaged along anti-diagonals, and only the band of
//! indices with long anti-diagonals at that scale is kept:
//!
//! | base | scale `k` | Hankel size `ℓ` | indices assigned |
//! |------|-----------|-----------------|------------------|
//! | 2    | `0..=log₂L` | `2^k`         | `(ℓ/2, ℓ]`       |
//! | 3    | `1`       | `2`             | `[1, 3]`         |
//! | 3    | `2..=log₃L` | `2·3^{k-1}`   | `(3^{k-1}, 3^k]` |
//!
//! The bands partition `[1, L]`. `F̃(0) = F(0)`, and indices past `L` are
//! passed through unchanged.

use std::fmt;
use std::str::FromStr;

use crate::blockmat::{antidiagonal_average, hankel_from_ir, BlockHankel};
use crate::error::{Result, SysIdError};
use crate::impulse::ImpulseResponse;
use crate::spectral::rank_r_svd;

/// Growth factor between consecutive Hankel sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Base {
    Two,
    Three,
}

impl Base {
    pub fn value(self) -> usize {
        match self {
            Base::Two => 2,
            Base::Three => 3,
        }
    }

    pub fn from_value(v: usize) -> Result<Self> {
        match v {
            2 => Ok(Base::Two),
            3 => Ok(Base::Three),
            _ => Err(SysIdError::InvalidArgument(format!("base must be 2 or 3, got {v}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DenoiseMode {
    Multiscale,
    SingleScale,
    /// Raw least-squares estimate.
    None,
}

impl fmt::Display for DenoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenoiseMode::Multiscale => "multiscale",
            DenoiseMode::SingleScale => "single",
            DenoiseMode::None => "none",
        })
    }
}

impl FromStr for DenoiseMode {
    type Err = SysIdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiscale" => Ok(DenoiseMode::Multiscale),
            "single" | "single_scale" => Ok(DenoiseMode::SingleScale),
            "none" => Ok(DenoiseMode::None),
            other => Err(SysIdError::InvalidArgument(format!(
                "unknown mode `{other}` (expected multiscale, single or none)"
            ))),
        }
    }
}

/// One band of the scale schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale {
    pub hankel_size: usize,
    /// First index assigned by this scale.
    pub first: usize,
    /// Last index assigned by this scale (inclusive).
    pub last: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiscaleConfig {
    /// Horizon `L`, an exact power of `base`.
    pub horizon: usize,
    /// Target rank `d`.
    pub rank: usize,
    pub base: Base,
    pub mode: DenoiseMode,
}

fn exact_log(value: usize, base: usize) -> Option<u32> {
    let mut p = 1usize;
    let mut k = 0;
    while p < value {
        p = p.checked_mul(base)?;
        k += 1;
    }
    (p == value).then_some(k)
}

impl MultiscaleConfig {
    pub fn new(horizon: usize, rank: usize, base: Base, mode: DenoiseMode) -> Result<Self> {
        if exact_log(horizon, base.value()).is_none() || horizon == 0 {
            return Err(SysIdError::InvalidArgument(format!(
                "L = {horizon} is not a power of {}",
                base.value()
            )));
        }
        if rank == 0 {
            return Err(SysIdError::InvalidArgument("rank d must be at least 1".into()));
        }
        Ok(Self {
            horizon,
            rank,
            base,
            mode,
        })
    }

    /// Size of the largest Hankel used (`L`, or `2L/3` in base 3).
    pub fn largest_hankel_size(&self) -> usize {
        match self.base {
            Base::Two => self.horizon,
            Base::Three if self.horizon >= 3 => 2 * self.horizon / 3,
            Base::Three => 1,
        }
    }

    /// Minimum FIR length (entries `0..len`) the denoiser needs.
    pub fn required_fir_len(&self) -> usize {
        (2 * self.largest_hankel_size()).max(self.horizon + 1)
    }

    pub fn scales(&self) -> Vec<Scale> {
        scale_schedule(self.horizon, self.base)
    }
}

/// Scale-to-index assignment covering `[1, L]`.
pub fn scale_schedule(horizon: usize, base: Base) -> Vec<Scale> {
    let levels = exact_log(horizon, base.value()).expect("validated power of base");
    let mut out = Vec::new();
    if base == Base::Two || levels == 0 {
        out.push(Scale {
            hankel_size: 1,
            first: 1,
            last: 1,
        });
    }
    for k in 1..=levels {
        let scale = match base {
            Base::Two => {
                let l = 1usize << k;
                Scale {
                    hankel_size: l,
                    first: l / 2 + 1,
                    last: l,
                }
            }
            Base::Three => {
                let p = 3usize.pow(k - 1);
                Scale {
                    hankel_size: 2 * p,
                    first: if k == 1 { 1 } else { p + 1 },
                    last: 3 * p,
                }
            }
        };
        out.push(scale);
    }
    out
}

/// `R_ℓ`: rank-`min(d, ℓ·d_y, ℓ·d_u)` SVD of `Hankel_{ℓ×ℓ}(F)` built from `F(1..2ℓ-1)`.
pub fn denoise_scale(f: &ImpulseResponse, hankel_size: usize, rank: usize) -> Result<BlockHankel> {
    let h = hankel_from_ir(f, hankel_size, hankel_size, 1)?;
    let (rows, cols) = h.matrix().shape();
    let r = rank.min(rows).min(cols);
    let svd = rank_r_svd(h.matrix(), r)?;
    BlockHankel::from_matrix(svd.reconstruct(), hankel_size, hankel_size, f.d_y(), f.d_u(), 1)
}

fn check_len(f: &ImpulseResponse, cfg: &MultiscaleConfig) -> Result<()> {
    let need = cfg.required_fir_len();
    if f.len() < need {
        return Err(SysIdError::InsufficientData(format!(
            "denoising with L = {} (base {}) needs F on [0, {}], have {} entries",
            cfg.horizon,
            cfg.base.value(),
            need - 1,
            f.len()
        )));
    }
    Ok(())
}

/// Dispatches on `cfg.mode`.
pub fn denoise(f: &ImpulseResponse, cfg: &MultiscaleConfig) -> Result<ImpulseResponse> {
    match cfg.mode {
        DenoiseMode::Multiscale => denoise_multiscale(f, cfg),
        DenoiseMode::SingleScale => denoise_single_scale(f, cfg),
        DenoiseMode::None => {
            check_len(f, cfg)?;
            Ok(f.clone())
        }
    }
}

pub fn denoise_multiscale(f: &ImpulseResponse, cfg: &MultiscaleConfig) -> Result<ImpulseResponse> {
    check_len(f, cfg)?;
    let mut out = f.clone();
    for scale in cfg.scales() {
        let r = denoise_scale(f, scale.hankel_size, cfg.rank)?;
        for t in scale.first..=scale.last {
            out.set(t, antidiagonal_average(&r, t)?);
        }
    }
    Ok(out)
}

/// Reads every `F̃(t)`, `t ∈ [1, L]`, off one SVD of the largest Hankel.
pub fn denoise_single_scale(f: &ImpulseResponse, cfg: &MultiscaleConfig) -> Result<ImpulseResponse> {
    check_len(f, cfg)?;
    let mut out = f.clone();
    let r = denoise_scale(f, cfg.largest_hankel_size(), cfg.rank)?;
    for t in 1..=cfg.horizon {
        out.set(t, antidiagonal_average(&r, t)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lds::random_system;
    use crate::rng::{gaussian_matrix, rng_from_seed};

    fn covered(cfg: &MultiscaleConfig) -> Vec<usize> {
        let mut idx: Vec<usize> = cfg.scales().iter().flat_map(|s| s.first..=s.last).collect();
        idx.sort_unstable();
        idx
    }

    #[test]
    fn schedules_partition_the_horizon() {
        for (l, base) in [(8, Base::Two), (27, Base::Three), (1, Base::Two), (64, Base::Two), (81, Base::Three)] {
            let cfg = MultiscaleConfig::new(l, 1, base, DenoiseMode::Multiscale).unwrap();
            assert_eq!(covered(&cfg), (1..=l).collect::<Vec<_>>(), "L={l}");
            for s in cfg.scales() {
                // every assigned index lies on an anti-diagonal of this Hankel
                assert!(s.last < 2 * s.hankel_size);
                assert!(2 * s.hankel_size <= cfg.required_fir_len());
            }
        }
    }

    #[test]
    fn rejects_non_powers() {
        assert!(MultiscaleConfig::new(12, 1, Base::Two, DenoiseMode::Multiscale).is_err());
        assert!(MultiscaleConfig::new(8, 1, Base::Three, DenoiseMode::Multiscale).is_err());
        assert!(MultiscaleConfig::new(0, 1, Base::Two, DenoiseMode::Multiscale).is_err());
        assert!(MultiscaleConfig::new(8, 0, Base::Two, DenoiseMode::Multiscale).is_err());
        assert!(Base::from_value(4).is_err());
    }

    #[test]
    fn window_lengths() {
        let c = MultiscaleConfig::new(27, 3, Base::Three, DenoiseMode::Multiscale).unwrap();
        assert_eq!(c.largest_hankel_size(), 18);
        assert_eq!(c.required_fir_len(), 36);
        let c = MultiscaleConfig::new(16, 3, Base::Two, DenoiseMode::Multiscale).unwrap();
        assert_eq!(c.required_fir_len(), 32);
    }

    #[test]
    fn exact_response_is_a_fixed_point() {
        for (d, du, dy, l, base) in [
            (1, 1, 1, 8, Base::Two),
            (3, 2, 2, 16, Base::Two),
            (3, 3, 3, 27, Base::Three),
            (5, 3, 3, 27, Base::Three),
        ] {
            let sys = random_system(d, du, dy, 0.9, (d * 100 + l) as u64).unwrap();
            for mode in [DenoiseMode::Multiscale, DenoiseMode::SingleScale] {
                let cfg = MultiscaleConfig::new(l, d, base, mode).unwrap();
                let f = sys.impulse_response(cfg.required_fir_len());
                let g = denoise(&f, &cfg).unwrap();
                let err = g.sub(&f).max_abs();
                assert!(err < 1e-8, "d={d} L={l} {mode}: {err:e}");
            }
        }
    }

    #[test]
    fn single_scale_matches_multiscale_top_band() {
        let mut rng = rng_from_seed(3);
        let f = ImpulseResponse::new((0..16).map(|_| gaussian_matrix(&mut rng, 2, 2)).collect())
            .unwrap();
        let multi = MultiscaleConfig::new(8, 2, Base::Two, DenoiseMode::Multiscale).unwrap();
        let single = MultiscaleConfig { mode: DenoiseMode::SingleScale, ..multi };
        let a = denoise(&f, &multi).unwrap();
        let b = denoise(&f, &single).unwrap();
        for t in 5..=8 {
            assert!((a.get(t) - b.get(t)).amax() < 1e-12);
        }
        assert_eq!(a.get(0), f.get(0));
        // pass-through beyond L
        for t in 9..16 {
            assert_eq!(a.get(t), f.get(t));
        }
    }

    #[test]
    fn too_short_input_is_rejected() {
        let f = ImpulseResponse::zeros(10, 1, 1);
        let cfg = MultiscaleConfig::new(8, 1, Base::Two, DenoiseMode::Multiscale).unwrap();
        assert!(matches!(denoise(&f, &cfg), Err(SysIdError::InsufficientData(_))));
    }

    #[test]
    fn denoising_reduces_scalar_noise() {
        let sys = random_system(1, 1, 1, 0.9, 4).unwrap();
        let cfg = MultiscaleConfig::new(32, 1, Base::Two, DenoiseMode::Multiscale).unwrap();
        let truth = sys.impulse_response(cfg.required_fir_len());
        let mut wins = 0;
        for trial in 0..100 {
            let mut rng = rng_from_seed(1000 + trial);
            let noise = gaussian_matrix(&mut rng, truth.len(), 1) * 0.05;
            let noisy = ImpulseResponse::from_stacked(&(truth.stacked() + noise), 1).unwrap();
            let den = denoise(&noisy, &cfg).unwrap();
            let band = |g: &ImpulseResponse| g.sub(&truth).restricted(1, 32).frobenius_norm();
            if band(&den) < band(&noisy) {
                wins += 1;
            }
        }
        assert!(wins >= 90, "{wins}/100");
    }

    #[test]
    fn per_scale_averaging_bound() {
        // ‖(F̃−F*)1_(ℓ/2,ℓ]‖² ≤ (2/ℓ)‖R_ℓ − H*_ℓ‖²
        let sys = random_system(2, 2, 1, 0.9, 8).unwrap();
        let truth = sys.impulse_response(64);
        let mut rng = rng_from_seed(9);
        for _ in 0..20 {
            let noise = gaussian_matrix(&mut rng, 64 * 2, 1) * 0.1;
            let f = ImpulseResponse::from_stacked(&(truth.stacked() + noise), 2).unwrap();
            for l in [2usize, 4, 8, 16, 32] {
                let r = denoise_scale(&f, l, 2).unwrap();
                let h_star = hankel_from_ir(&truth, l, l, 1).unwrap();
                let rhs = (r.matrix() - h_star.matrix()).norm_squared() * 2.0 / l as f64;
                let lhs: f64 = (l / 2 + 1..=l)
                    .map(|t| (antidiagonal_average(&r, t).unwrap() - truth.get(t)).norm_squared())
                    .sum();
                assert!(lhs <= rhs * (1.0 + 1e-12), "l={l}: {lhs} > {rhs}");
            }
        }
    }
}
