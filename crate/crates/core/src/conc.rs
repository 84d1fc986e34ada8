//! Monte Carlo checks of the concentration results behind the estimator:
//! Gram deviation of the Toeplitz regressor, its smallest eigenvalue, the
//! cross term against an independent sequence, and the H∞ error of the FIR
//! fit on sub-windows.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::blockmat::toeplitz_gram;
use crate::error::{Result, SysIdError};
use crate::estimation::fir_least_squares;
use crate::lds::{simulate, StateSpaceSystem};
use crate::linalg::{spectral_norm, symmetric_eig_range};
use crate::rng::{derive_seed, gaussian_matrix, rng_stream};
use crate::spectral::hinf_grid_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConcStat {
    /// `‖UᵀU − T·I‖₂`.
    GramDeviation,
    /// `σ_min(UᵀU)`.
    SigmaMin,
    /// `‖UᵀW‖₂` for independent `u`, `w`.
    CrossGram,
    /// `‖(F − F*)·1_window‖_{H∞}` of the FIR fit.
    HinfError,
}

impl ConcStat {
    pub fn name(self) -> &'static str {
        match self {
            ConcStat::GramDeviation => "gram_deviation",
            ConcStat::SigmaMin => "sigma_min",
            ConcStat::CrossGram => "cross_gram",
            ConcStat::HinfError => "hinf_error",
        }
    }
}

impl fmt::Display for ConcStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConcStat {
    type Err = SysIdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gram_deviation" => Ok(ConcStat::GramDeviation),
            "sigma_min" => Ok(ConcStat::SigmaMin),
            "cross_gram" => Ok(ConcStat::CrossGram),
            "hinf_error" => Ok(ConcStat::HinfError),
            other => Err(SysIdError::InvalidArgument(format!(
                "unknown statistic `{other}` (expected gram_deviation, sigma_min, cross_gram or hinf_error)"
            ))),
        }
    }
}

/// Empirical quantiles, linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles {
    pub min: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            min: quantile_sorted(&s, 0.0),
            q05: quantile_sorted(&s, 0.05),
            median: quantile_sorted(&s, 0.5),
            q95: quantile_sorted(&s, 0.95),
            max: quantile_sorted(&s, 1.0),
        }
    }
}

/// `q`-quantile of an ascending slice; NaN when empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcTrialReport {
    pub t: usize,
    pub l: usize,
    pub d_u: usize,
    pub stat: ConcStat,
    /// One value per trial, in trial order.
    pub samples: Vec<f64>,
    /// Rate the statistic is compared against (`samples / normalizer`).
    pub normalizer: f64,
    pub quantiles: Quantiles,
    /// Fraction of trials in the event (`σ_min ≥ T/2`), where defined.
    pub event_frequency: Option<f64>,
    /// Index window `[lo, hi]` of the H∞ statistic.
    pub window: Option<(usize, usize)>,
    pub seed: u64,
}

impl ConcTrialReport {
    fn new(t: usize, l: usize, d_u: usize, stat: ConcStat, samples: Vec<f64>, normalizer: f64, seed: u64) -> Self {
        let quantiles = Quantiles::of(&samples);
        Self {
            t,
            l,
            d_u,
            stat,
            samples,
            normalizer,
            quantiles,
            event_frequency: None,
            window: None,
            seed,
        }
    }

    pub fn n_trials(&self) -> usize {
        self.samples.len()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Sample standard deviation (`n − 1` denominator); zero for one trial.
    pub fn std(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    /// `q`-quantile of `samples / normalizer`.
    pub fn normalized_quantile(&self, q: f64) -> f64 {
        quantile(&self.samples, q) / self.normalizer
    }

    /// Label used in the estimator column of the results CSV.
    pub fn label(&self) -> String {
        match self.window {
            Some((lo, hi)) => format!("{}[{lo}:{hi}]", self.stat),
            None => self.stat.to_string(),
        }
    }
}

fn check_shape(t: usize, l: usize, d_u: usize, n_trials: usize) -> Result<()> {
    if d_u == 0 || n_trials == 0 {
        return Err(SysIdError::InvalidArgument("d_u and the trial count must be positive".into()));
    }
    if t < l.max(1) {
        return Err(SysIdError::InvalidArgument(format!("need T >= L, got T = {t}, L = {l}")));
    }
    Ok(())
}

fn run_trials<F>(n_trials: usize, seed: u64, trial: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    (0..n_trials as u64)
        .into_par_iter()
        .map(|i| trial(derive_seed(seed, &[i])))
        .collect()
}

/// `UᵀU` for `U = Toep_{T×(L+1)}` of a standard normal `u` drawn from `seed`.
fn input_gram(t: usize, l: usize, d_u: usize, seed: u64) -> nalgebra::DMatrix<f64> {
    let u = gaussian_matrix(&mut rng_stream(seed, 0), t, d_u);
    toeplitz_gram(&u, &u, t, l)
}

/// `‖UᵀU − T·I‖₂`, normalized by `√(T·(L+1)·d_u·log T)`.
pub fn gram_deviation_trials(t: usize, l: usize, d_u: usize, n_trials: usize, seed: u64) -> Result<ConcTrialReport> {
    check_shape(t, l, d_u, n_trials)?;
    let samples = run_trials(n_trials, seed, |s| {
        let mut g = input_gram(t, l, d_u, s);
        for i in 0..g.nrows() {
            g[(i, i)] -= t as f64;
        }
        let (lo, hi) = symmetric_eig_range(&g);
        Ok(lo.abs().max(hi.abs()))
    })?;
    let norm = rate(t, l, d_u);
    Ok(ConcTrialReport::new(t, l, d_u, ConcStat::GramDeviation, samples, norm, seed))
}

/// `σ_min(UᵀU)` and the frequency of `σ_min ≥ T/2`.
pub fn sigma_min_trials(t: usize, l: usize, d_u: usize, n_trials: usize, seed: u64) -> Result<ConcTrialReport> {
    check_shape(t, l, d_u, n_trials)?;
    let samples = run_trials(n_trials, seed, |s| Ok(symmetric_eig_range(&input_gram(t, l, d_u, s)).0))?;
    let hits = samples.iter().filter(|&&x| x >= t as f64 / 2.0).count();
    let mut report = ConcTrialReport::new(t, l, d_u, ConcStat::SigmaMin, samples, t as f64, seed);
    report.event_frequency = Some(hits as f64 / n_trials as f64);
    Ok(report)
}

/// `‖UᵀW‖₂` with `W` the Toeplitz regressor of an independent `d_u`-dimensional sequence.
pub fn cross_gram_trials(t: usize, l: usize, d_u: usize, n_trials: usize, seed: u64) -> Result<ConcTrialReport> {
    check_shape(t, l, d_u, n_trials)?;
    let samples = run_trials(n_trials, seed, |s| {
        let u = gaussian_matrix(&mut rng_stream(s, 0), t, d_u);
        let w = gaussian_matrix(&mut rng_stream(s, 1), t, d_u);
        Ok(spectral_norm(&toeplitz_gram(&u, &w, t, l)))
    })?;
    let norm = rate(t, l, d_u);
    Ok(ConcTrialReport::new(t, l, d_u, ConcStat::CrossGram, samples, norm, seed))
}

fn rate(t: usize, l: usize, d_u: usize) -> f64 {
    (t as f64 * (l + 1) as f64 * d_u as f64 * (t as f64).ln().max(1.0)).sqrt()
}

/// Window lengths `L/4, L/2, L` (deduplicated, at least 1).
pub fn hinf_windows(l: usize) -> Vec<usize> {
    let mut w: Vec<usize> = [l / 4, l / 2, l].into_iter().map(|x| x.max(1)).collect();
    w.dedup();
    w
}

/// H∞ error of the length-`L+1` FIR fit on the windows `[1, L′]`,
/// `L′ ∈ {L/4, L/2, L}`; one report per window, all from the same trials.
///
/// Normalized by `σ·√(L′·(d_u + d_y + log L′)/T)` with `σ² = ‖Σ_y‖`.
pub fn regression_hinf_trials(
    sys: &StateSpaceSystem,
    t: usize,
    l: usize,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<ConcTrialReport>> {
    check_shape(t, l, sys.d_u(), n_trials)?;
    if l == 0 {
        return Err(SysIdError::InvalidArgument("L must be positive".into()));
    }
    if sys.sigma_x().amax() != 0.0 {
        return Err(SysIdError::InvalidArgument(
            "regression H∞ trials need a system without process noise".into(),
        ));
    }
    let windows = hinf_windows(l);
    let truth = sys.impulse_response(l + 1);
    let per_trial: Vec<Vec<f64>> = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let traj = simulate(sys, t, derive_seed(seed, &[i]))?;
            let err = fir_least_squares(&traj, l + 1)?.ir.sub(&truth);
            Ok(windows
                .iter()
                .map(|&w| hinf_grid_norm(&err.window(1, w), w).lower)
                .collect())
        })
        .collect::<Result<_>>()?;

    let sigma = spectral_norm(sys.sigma_y()).sqrt();
    let (d_u, d_y) = (sys.d_u() as f64, sys.d_y() as f64);
    Ok(windows
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let samples = per_trial.iter().map(|row| row[k]).collect();
            let wf = w as f64;
            let norm = sigma * (wf * (d_u + d_y + wf.ln()) / t as f64).sqrt();
            let mut r = ConcTrialReport::new(t, l, sys.d_u(), ConcStat::HinfError, samples, norm, seed);
            r.window = Some((1, w));
            r
        })
        .collect())
}
