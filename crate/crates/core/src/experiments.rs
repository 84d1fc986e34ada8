//! Error-vs-T sweeps comparing raw least squares with single- and
//! multi-scale Hankel SVD denoising over ensembles of random systems.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::conc::{quantile, ConcTrialReport};
use crate::denoise::{denoise, Base, DenoiseMode, MultiscaleConfig};
use crate::error::{Result, SysIdError};
use crate::estimation::fir_least_squares;
use crate::impulse::ImpulseResponse;
use crate::lds::{default_tail_horizon, random_system, simulate, truncation_error, StateSpaceSystem};
use crate::linalg::{spectral_norm, vstack};
use crate::rng::derive_seed;

/// Column names of the results CSV, in order.
pub const CSV_HEADER: [&str; 16] = [
    "setting",
    "d",
    "d_u",
    "d_y",
    "L",
    "base",
    "lambda_max",
    "sigma_y",
    "sigma_x",
    "T",
    "estimator",
    "n_systems",
    "err_mean",
    "err_median",
    "err_std",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    LeastSquares,
    SvdSingle,
    SvdMultiscale,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::LeastSquares, Estimator::SvdSingle, Estimator::SvdMultiscale];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::LeastSquares => "least_squares",
            Estimator::SvdSingle => "svd_single",
            Estimator::SvdMultiscale => "svd_multiscale",
        }
    }

    fn mode(self) -> DenoiseMode {
        match self {
            Estimator::LeastSquares => DenoiseMode::None,
            Estimator::SvdSingle => DenoiseMode::SingleScale,
            Estimator::SvdMultiscale => DenoiseMode::Multiscale,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = SysIdError;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| SysIdError::InvalidArgument(format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Label written to the `setting` column.
    pub setting: String,
    pub d: usize,
    pub d_u: usize,
    pub d_y: usize,
    pub horizon: usize,
    pub lambda_max: f64,
    pub base: Base,
    pub t_grid: Vec<usize>,
    pub n_systems: usize,
    pub sigma_y_scale: f64,
    pub sigma_x_scale: f64,
    pub master_seed: u64,
}

/// Eight geometric points from `4L` to `512L`.
pub fn default_t_grid(horizon: usize) -> Vec<usize> {
    (0..8).map(|k| (4 * horizon) << k).collect()
}

impl ExperimentConfig {
    /// One of the five published settings (`1..=5`), all in base 3 with ten systems.
    pub fn preset(setting: usize, master_seed: u64) -> Result<Self> {
        let (d, d_u, d_y, horizon, lambda_max) = match setting {
            1 => (1, 1, 1, 27, 0.9),
            2 => (3, 3, 3, 27, 0.9),
            3 => (3, 3, 3, 81, 0.95),
            4 => (5, 3, 3, 81, 0.95),
            5 => (10, 3, 3, 81, 0.95),
            other => {
                return Err(SysIdError::InvalidArgument(format!(
                    "setting must be 1..5, got {other}"
                )))
            }
        };
        let mut cfg = Self {
            setting: setting.to_string(),
            d,
            d_u,
            d_y,
            horizon,
            lambda_max,
            base: Base::Three,
            t_grid: Vec::new(),
            n_systems: 10,
            sigma_y_scale: 1.0,
            sigma_x_scale: 0.0,
            master_seed,
        };
        cfg.t_grid = cfg.default_grid();
        Ok(cfg)
    }

    /// Number of regression unknowns per output coordinate.
    pub fn regressor_width(&self) -> usize {
        self.denoise_config().required_fir_len() * self.d_u
    }

    /// [`default_t_grid`] without the points where `T` does not exceed the
    /// regressor width (a square or underdetermined fit).
    pub fn default_grid(&self) -> Vec<usize> {
        let width = self.regressor_width();
        default_t_grid(self.horizon).into_iter().filter(|&t| t > width).collect()
    }

    pub fn validate(&self) -> Result<()> {
        MultiscaleConfig::new(self.horizon, self.d, self.base, DenoiseMode::Multiscale)?;
        if self.d_u == 0 || self.d_y == 0 {
            return Err(SysIdError::InvalidArgument("d_u and d_y must be positive".into()));
        }
        if self.t_grid.is_empty() {
            return Err(SysIdError::InvalidArgument("T grid is empty".into()));
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SysIdError::InvalidArgument("T grid must be strictly increasing".into()));
        }
        if self.n_systems == 0 {
            return Err(SysIdError::InvalidArgument("n_systems must be at least 1".into()));
        }
        if !(self.lambda_max > 0.0 && self.lambda_max < 1.0) {
            return Err(SysIdError::InvalidArgument(format!(
                "lambda_max must lie in (0, 1), got {}",
                self.lambda_max
            )));
        }
        if !(self.sigma_y_scale >= 0.0 && self.sigma_x_scale >= 0.0) {
            return Err(SysIdError::InvalidArgument("noise scales must be nonnegative".into()));
        }
        let need = self.denoise_config().required_fir_len();
        if self.t_grid[0] < need {
            return Err(SysIdError::InvalidArgument(format!(
                "smallest T = {} is below the FIR length {need}",
                self.t_grid[0]
            )));
        }
        Ok(())
    }

    /// Multiscale de-noising parameters of this configuration.
    pub fn denoise_config(&self) -> MultiscaleConfig {
        MultiscaleConfig {
            horizon: self.horizon,
            rank: self.d,
            base: self.base,
            mode: DenoiseMode::Multiscale,
        }
    }

    /// System `index` of the ensemble, with the configured noise.
    pub fn system(&self, index: usize) -> Result<StateSpaceSystem> {
        let seed = derive_seed(self.master_seed, &[0, index as u64]);
        Ok(random_system(self.d, self.d_u, self.d_y, self.lambda_max, seed)?
            .with_isotropic_noise(self.sigma_x_scale, self.sigma_y_scale))
    }

    /// Seed of the trajectory for `(system, T)`, independent of grid position.
    pub fn cell_seed(&self, index: usize, t: usize) -> u64 {
        derive_seed(self.master_seed, &[1, index as u64, t as u64])
    }

    /// `key = value` lines describing the config.
    pub fn echo(&self) -> Vec<(String, String)> {
        let grid: Vec<String> = self.t_grid.iter().map(|t| t.to_string()).collect();
        vec![
            ("setting".into(), self.setting.clone()),
            ("d".into(), self.d.to_string()),
            ("du".into(), self.d_u.to_string()),
            ("dy".into(), self.d_y.to_string()),
            ("L".into(), self.horizon.to_string()),
            ("lambda_max".into(), fmt_f64(self.lambda_max)),
            ("base".into(), self.base.value().to_string()),
            ("T".into(), grid.join(",")),
            ("n_systems".into(), self.n_systems.to_string()),
            ("sigma_y".into(), fmt_f64(self.sigma_y_scale)),
            ("sigma_x".into(), fmt_f64(self.sigma_x_scale)),
            ("seed".into(), self.master_seed.to_string()),
        ]
    }
}

/// Errors of the three estimators on one `(system, T)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellErrors {
    pub least_squares: f64,
    pub svd_single: f64,
    pub svd_multiscale: f64,
}

impl CellErrors {
    pub fn get(&self, e: Estimator) -> f64 {
        match e {
            Estimator::LeastSquares => self.least_squares,
            Estimator::SvdSingle => self.svd_single,
            Estimator::SvdMultiscale => self.svd_multiscale,
        }
    }
}

/// `‖(F̃ − F*)·1_[1,L]‖_F`.
pub fn window_error(estimate: &ImpulseResponse, truth: &ImpulseResponse, horizon: usize) -> f64 {
    estimate.window(1, horizon).sub(&truth.window(1, horizon)).frobenius_norm()
}

/// Simulates one trajectory of `sys` and scores all three estimators on it.
pub fn run_cell(cfg: &ExperimentConfig, sys: &StateSpaceSystem, t: usize, seed: u64) -> Result<CellErrors> {
    let base = cfg.denoise_config();
    let traj = simulate(sys, t, seed)?;
    let raw = fir_least_squares(&traj, base.required_fir_len())?.ir;
    let truth = sys.impulse_response(cfg.horizon + 1);
    let score = |e: Estimator| -> Result<f64> {
        let est = denoise(&raw, &MultiscaleConfig { mode: e.mode(), ..base })?;
        Ok(window_error(&est, &truth, cfg.horizon))
    };
    Ok(CellErrors {
        least_squares: score(Estimator::LeastSquares)?,
        svd_single: score(Estimator::SvdSingle)?,
        svd_multiscale: score(Estimator::SvdMultiscale)?,
    })
}

/// One `(T, estimator)` aggregate over the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub t: usize,
    pub estimator: Estimator,
    /// Per-system errors, in system order.
    pub errors: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

impl CellSummary {
    fn new(t: usize, estimator: Estimator, errors: Vec<f64>) -> Self {
        let (mean, median, std) = summarize(&errors);
        Self {
            t,
            estimator,
            errors,
            mean,
            median,
            std,
        }
    }
}

/// Mean, median and sample standard deviation.
pub fn summarize(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, quantile(xs, 0.5), std)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Ordered by `T`, then estimator.
    pub cells: Vec<CellSummary>,
}

impl ExperimentResult {
    pub fn cell(&self, t: usize, estimator: Estimator) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.t == t && c.estimator == estimator)
    }

    pub fn medians(&self, estimator: Estimator) -> Vec<(usize, f64)> {
        self.cells
            .iter()
            .filter(|c| c.estimator == estimator)
            .map(|c| (c.t, c.median))
            .collect()
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        let c = &self.config;
        self.cells
            .iter()
            .map(|cell| ResultRow {
                setting: c.setting.clone(),
                d: c.d,
                d_u: c.d_u,
                d_y: c.d_y,
                horizon: c.horizon,
                base: c.base.value(),
                lambda_max: c.lambda_max,
                sigma_y: c.sigma_y_scale,
                sigma_x: c.sigma_x_scale,
                t: cell.t,
                estimator: cell.estimator.name().to_string(),
                n_systems: cell.errors.len(),
                err_mean: cell.mean,
                err_median: cell.median,
                err_std: cell.std,
                seed: c.master_seed,
            })
            .collect()
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let systems: Vec<StateSpaceSystem> = (0..cfg.n_systems).map(|s| cfg.system(s)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.n_systems)
        .flat_map(|s| cfg.t_grid.iter().map(move |&t| (s, t)))
        .collect();
    let outcomes: Vec<CellErrors> = jobs
        .par_iter()
        .map(|&(s, t)| {
            run_cell(cfg, &systems[s], t, cfg.cell_seed(s, t)).map_err(|e| SysIdError::Cell {
                system: s,
                t,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let n_t = cfg.t_grid.len();
    let mut cells = Vec::with_capacity(n_t * 3);
    for (k, &t) in cfg.t_grid.iter().enumerate() {
        for e in Estimator::ALL {
            let errors = (0..cfg.n_systems).map(|s| outcomes[s * n_t + k].get(e)).collect();
            cells.push(CellSummary::new(t, e, errors));
        }
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        cells,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// The three terms of the main error bound, each with constant 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    /// Effective noise level `σ`.
    pub sigma: f64,
    /// `σ·√(d·(d_y + d_u + log(L/δ))·log L / T)`.
    pub statistical: f64,
    /// `ε_trunc·√d`.
    pub truncation: f64,
    /// `‖F*·1_(L,∞)‖_F`.
    pub tail: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.statistical + self.truncation + self.tail
    }
}

/// `M_{x→y} = (0, C, CA, …, CA^{L−1})ᵀ`, shape `(L+1)·d × d_y`.
pub fn noise_to_output(sys: &StateSpaceSystem, horizon: usize) -> nalgebra::DMatrix<f64> {
    let g = sys.process_noise_response(horizon.max(1));
    let mut parts = vec![nalgebra::DMatrix::zeros(sys.order(), sys.d_y())];
    parts.extend(g.iter().take(horizon).map(|b| b.transpose()));
    let refs: Vec<&nalgebra::DMatrix<f64>> = parts.iter().collect();
    vstack(&refs)
}

/// Shape of the main error bound, for plot overlays; never an assertion.
pub fn error_bound(sys: &StateSpaceSystem, horizon: usize, t: usize, delta: f64) -> Result<BoundTerms> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(SysIdError::InvalidArgument(format!("delta must lie in (0, 1/2], got {delta}")));
    }
    if horizon == 0 || t == 0 {
        return Err(SysIdError::InvalidArgument("L and T must be positive".into()));
    }
    let (l, d, du, dy) = (horizon as f64, sys.order() as f64, sys.d_u() as f64, sys.d_y() as f64);
    let m = spectral_norm(&noise_to_output(sys, horizon));
    let sigma = (spectral_norm(sys.sigma_y()) + spectral_norm(sys.sigma_x()) * l * (l * du / delta).ln() * m * m).sqrt();
    let statistical = sigma * (d * (dy + du + (l / delta).ln()) * l.ln() / t as f64).sqrt();

    let tail_len = default_tail_horizon(sys, horizon);
    let truncation = truncation_error(sys, horizon, tail_len)? * d.sqrt();
    let f = sys.impulse_response(tail_len);
    let tail = f.window(horizon + 1, tail_len - 1).frobenius_norm();
    Ok(BoundTerms {
        sigma,
        statistical,
        truncation,
        tail,
    })
}

/// Smallest `T` with `T ≥ c·L·d_u·log(L·d_u/δ)`.
pub fn t_min(horizon: usize, d_u: usize, delta: f64, c: f64) -> usize {
    let ld = (horizon * d_u) as f64;
    (c * ld * (ld / delta).ln()).ceil().max(1.0) as usize
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub setting: String,
    pub d: usize,
    pub d_u: usize,
    pub d_y: usize,
    pub horizon: usize,
    pub base: usize,
    pub lambda_max: f64,
    pub sigma_y: f64,
    pub sigma_x: f64,
    pub t: usize,
    pub estimator: String,
    pub n_systems: usize,
    pub err_mean: f64,
    pub err_median: f64,
    pub err_std: f64,
    pub seed: u64,
}

impl ResultRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.setting.clone(),
            self.d.to_string(),
            self.d_u.to_string(),
            self.d_y.to_string(),
            self.horizon.to_string(),
            self.base.to_string(),
            fmt_f64(self.lambda_max),
            fmt_f64(self.sigma_y),
            fmt_f64(self.sigma_x),
            self.t.to_string(),
            self.estimator.clone(),
            self.n_systems.to_string(),
            fmt_f64(self.err_mean),
            fmt_f64(self.err_median),
            fmt_f64(self.err_std),
            self.seed.to_string(),
        ]
    }

    fn parse(rec: &csv::StringRecord, line: usize) -> Result<Self> {
        if rec.len() != CSV_HEADER.len() {
            return Err(SysIdError::Parse {
                line,
                msg: format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len()),
            });
        }
        let int = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| SysIdError::Parse {
                line,
                msg: format!("`{}` is not an integer ({})", &rec[i], CSV_HEADER[i]),
            })
        };
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| SysIdError::Parse {
                line,
                msg: format!("`{}` is not a number ({})", &rec[i], CSV_HEADER[i]),
            })
        };
        Ok(Self {
            setting: rec[0].to_string(),
            d: int(1)?,
            d_u: int(2)?,
            d_y: int(3)?,
            horizon: int(4)?,
            base: int(5)?,
            lambda_max: num(6)?,
            sigma_y: num(7)?,
            sigma_x: num(8)?,
            t: int(9)?,
            estimator: rec[10].to_string(),
            n_systems: int(11)?,
            err_mean: num(12)?,
            err_median: num(13)?,
            err_std: num(14)?,
            seed: rec[15].parse().map_err(|_| SysIdError::Parse {
                line,
                msg: format!("`{}` is not a seed", &rec[15]),
            })?,
        })
    }
}

/// Rows for a concentration report: `setting = conc`, one row per report,
/// trials counted in `n_systems`.
pub fn conc_rows(report: &ConcTrialReport, sys: Option<&StateSpaceSystem>) -> ResultRow {
    let (mean, median, std) = summarize(&report.samples);
    ResultRow {
        setting: "conc".into(),
        d: sys.map_or(0, |s| s.order()),
        d_u: report.d_u,
        d_y: sys.map_or(0, |s| s.d_y()),
        horizon: report.l,
        base: 0,
        lambda_max: sys.map_or(0.0, |s| s.spectral_radius()),
        sigma_y: sys.map_or(0.0, |s| spectral_norm(s.sigma_y()).sqrt()),
        sigma_x: sys.map_or(0.0, |s| spectral_norm(s.sigma_x()).sqrt()),
        t: report.t,
        estimator: report.label(),
        n_systems: report.n_trials(),
        err_mean: mean,
        err_median: median,
        err_std: std,
        seed: report.seed,
    }
}

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `# key = value` comment lines, the header, then the rows.
pub fn write_rows<W: Write>(out: W, echo: &[(String, String)], rows: &[ResultRow]) -> Result<()> {
    let mut out = out;
    for (k, v) in echo {
        writeln!(out, "# {k} = {v}")?;
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_rows(&mut buf, &result.config.echo(), &result.rows())?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_rows(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(SysIdError::Parse {
            line: 1,
            msg: format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        rows.push(ResultRow::parse(&rec?, i + 2)?);
    }
    Ok(rows)
}

pub fn import_csv(path: &Path) -> Result<Vec<ResultRow>> {
    read_rows(&fs::read_to_string(path)?)
}

/// Writes a matplotlib script next to the CSV: one log-log panel per
/// setting, one line per estimator (mean with a dashed median).
pub fn emit_plot_script(csv_path: &Path, script_path: &Path) -> Result<()> {
    let name = csv_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| SysIdError::InvalidArgument(format!("bad CSV path {}", csv_path.display())))?;
    let png = Path::new(name).with_extension("png");
    let estimators = Estimator::ALL.map(|e| format!("\"{}\"", e.name())).join(", ");
    let script = format!(
        r##"#!/usr/bin/env python3
"""Error vs T for each estimator, read from {name}."""
import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
CSV_PATH = os.path.join(HERE, "{name}")
ESTIMATORS = [{estimators}]


def load(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    data = defaultdict(lambda: defaultdict(list))
    for row in csv.DictReader(lines):
        data[row["setting"]][row["estimator"]].append(
            (int(row["T"]), float(row["err_mean"]), float(row["err_median"]))
        )
    return data


def main():
    data = load(CSV_PATH)
    settings = sorted(data)
    fig, axes = plt.subplots(1, len(settings), figsize=(4.5 * len(settings), 4), squeeze=False)
    for ax, setting in zip(axes[0], settings):
        for est in ESTIMATORS:
            pts = sorted(data[setting].get(est, []))
            if not pts:
                continue
            ts = [p[0] for p in pts]
            line, = ax.plot(ts, [p[1] for p in pts], marker="o", label=est)
            ax.plot(ts, [p[2] for p in pts], linestyle="--", color=line.get_color())
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("T")
        ax.set_ylabel("error on [1, L]")
        ax.set_title("setting " + setting)
        ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, "{png}"))


if __name__ == "__main__":
    main()
"##,
        png = png.display()
    );
    fs::write(script_path, script)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            setting: "test".into(),
            d: 2,
            d_u: 1,
            d_y: 2,
            horizon: 9,
            lambda_max: 0.7,
            base: Base::Three,
            t_grid: vec![200, 400, 800],
            n_systems: 3,
            sigma_y_scale: 1.0,
            sigma_x_scale: 0.0,
            master_seed: seed,
        }
    }

    #[test]
    fn presets_match_published_settings() {
        let p = ExperimentConfig::preset(5, 0).unwrap();
        assert_eq!((p.d, p.d_u, p.d_y, p.horizon, p.lambda_max), (10, 3, 3, 81, 0.95));
        assert_eq!(p.t_grid.first(), Some(&648));
        assert_eq!(ExperimentConfig::preset(1, 0).unwrap().t_grid, default_t_grid(27));
        assert_eq!(p.t_grid.last(), Some(&(512 * 81)));
        for k in 1..=5 {
            ExperimentConfig::preset(k, 1).unwrap().validate().unwrap();
        }
        assert!(ExperimentConfig::preset(6, 0).is_err());
    }

    #[test]
    fn validation() {
        let mut c = small(0);
        c.t_grid.clear();
        assert!(c.validate().is_err());
        let mut c = small(0);
        c.t_grid = vec![400, 200];
        assert!(c.validate().is_err());
        let mut c = small(0);
        c.horizon = 8;
        assert!(c.validate().is_err());
        let mut c = small(0);
        c.n_systems = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn cells_have_one_error_per_system() {
        let r = run_experiment(&small(3)).unwrap();
        assert_eq!(r.cells.len(), 9);
        for c in &r.cells {
            assert_eq!(c.errors.len(), 3);
            assert!(c.errors.iter().all(|e| e.is_finite() && *e > 0.0));
        }
    }

    #[test]
    fn noiseless_estimators_collapse() {
        let mut c = small(4);
        c.sigma_y_scale = 0.0;
        c.lambda_max = 0.3;
        c.t_grid = vec![2000];
        let r = run_experiment(&c).unwrap();
        let errs: Vec<f64> = Estimator::ALL.iter().map(|&e| r.cell(2000, e).unwrap().median).collect();
        for e in &errs {
            assert!((e - errs[0]).abs() < 1e-6, "{errs:?}");
        }
    }

    #[test]
    fn csv_round_trip_and_header() {
        let r = run_experiment(&small(5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        export_csv(&r, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(
            header,
            "setting,d,d_u,d_y,L,base,lambda_max,sigma_y,sigma_x,T,estimator,n_systems,err_mean,err_median,err_std,seed"
        );
        assert!(text.starts_with("# setting = test\n"));
        assert_eq!(import_csv(&path).unwrap(), r.rows());
        // determinism
        let again = dir.path().join("again.csv");
        export_csv(&run_experiment(&small(5)).unwrap(), &again).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn cell_seed_ignores_grid_position() {
        let a = small(6);
        let mut b = small(6);
        b.t_grid = vec![100, 400];
        let ra = run_experiment(&a).unwrap();
        let rb = run_experiment(&b).unwrap();
        for e in Estimator::ALL {
            assert_eq!(ra.cell(400, e).unwrap().errors, rb.cell(400, e).unwrap().errors);
        }
    }

    #[test]
    fn fmt_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (1..6).map(|k| (k as f64 * 10.0, 3.0 * (k as f64 * 10.0).powf(-0.5))).collect();
        assert!((loglog_slope(&pts) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn bound_without_noise_is_truncation_plus_tail() {
        let sys = random_system(3, 2, 2, 0.8, 1).unwrap();
        let b = error_bound(&sys, 16, 1000, 0.1).unwrap();
        assert_eq!(b.statistical, 0.0);
        assert_eq!(b.total(), b.truncation + b.tail);
        assert!(b.tail > 0.0);
    }

    #[test]
    fn bound_statistical_term_scales() {
        let sys = random_system(3, 2, 2, 0.8, 1).unwrap().with_isotropic_noise(0.3, 1.0);
        let a = error_bound(&sys, 16, 1000, 0.1).unwrap();
        let b = error_bound(&sys, 16, 4000, 0.1).unwrap();
        assert!((b.statistical / a.statistical - 0.5).abs() < 1e-14);

        // L -> 2L: recompute sigma from the definition
        let c = error_bound(&sys, 32, 1000, 0.1).unwrap();
        let g = sys.process_noise_response(32);
        let mut stacked = nalgebra::DMatrix::zeros(33 * 3, 2);
        for t in 0..32 {
            stacked.view_mut(((t + 1) * 3, 0), (3, 2)).copy_from(&g.get(t).transpose());
        }
        let m = spectral_norm(&stacked);
        let want = (1.0 + 0.09 * 32.0 * (32.0 * 2.0 / 0.1f64).ln() * m * m).sqrt();
        assert!((c.sigma - want).abs() < 1e-10 * want);
        assert!(c.sigma > a.sigma);
    }

    #[test]
    fn t_min_grows_with_horizon() {
        assert!(t_min(32, 1, 0.05, 1.0) > t_min(16, 1, 0.05, 1.0));
    }

    #[test]
    fn plot_script_references_csv() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("bench.csv");
        let py = dir.path().join("bench_plot.py");
        emit_plot_script(&csv_path, &py).unwrap();
        let s = fs::read_to_string(&py).unwrap();
        assert!(s.contains("\"bench.csv\""));
        for e in Estimator::ALL {
            assert!(s.contains(&format!("\"{}\"", e.name())));
        }
        assert!(s.contains("set_xscale(\"log\")"));
        if let Ok(st) = std::process::Command::new("python3")
            .args(["-m", "py_compile"])
            .arg(&py)
            .status()
        {
            assert!(st.success());
        }
    }
}
