//! `hankel-sysid` command line.
//!
//! Every option can also come from a `--config` file; explicit flags win
//! over the file, which wins over the built-in defaults. Every output file
//! starts with the fully resolved options as `# key = value` comments.
//!
//! Exit status: 0 on success, 1 on usage or input errors, 2 when the
//! numerical pipeline fails (ill-conditioned fit, order-deficient Hankel...).

use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::conc::{
    cross_gram_trials, gram_deviation_trials, regression_hinf_trials, sigma_min_trials, ConcStat,
    ConcTrialReport,
};
use crate::config::{normalize_key, ConfigFile};
use crate::denoise::{denoise, Base, DenoiseMode, MultiscaleConfig};
use crate::error::{Result, SysIdError};
use crate::estimation::fir_least_squares;
use crate::experiments::{
    conc_rows, emit_plot_script, export_csv, fmt_f64, run_experiment, write_rows,
    ExperimentConfig,
};
use crate::lds::{random_system, simulate, StateSpaceSystem};
use crate::matrix_io::{format_ir, format_trajectory, parse_ir, parse_trajectory, Bundle};
use crate::realization::{align_similarity, ho_kalman, ir_distance};
use crate::rng::derive_seed;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "HANKEL_SYSID_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "hankel-sysid",
    version,
    about = "Impulse-response identification with multi-scale Hankel SVD denoising"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a trajectory from a random or file-specified system.
    Simulate(SimulateArgs),
    /// Fit a FIR model to a trajectory by least squares.
    Estimate(EstimateArgs),
    /// Denoise a FIR estimate with rank-d Hankel SVDs.
    Denoise(DenoiseArgs),
    /// Ho-Kalman realization of a FIR estimate.
    Realize(RealizeArgs),
    /// Error-vs-T benchmark of the three estimators.
    Bench(BenchArgs),
    /// Monte Carlo concentration statistics.
    Conc(ConcArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Horizon L (a power of the base).
    #[arg(long = "L")]
    l: Option<usize>,
    /// System order / denoising rank.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    du: Option<usize>,
    #[arg(long)]
    dy: Option<usize>,
    #[arg(long = "lambda-max")]
    lambda_max: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..=3))]
    base: Option<u64>,
    /// multiscale, single or none.
    #[arg(long)]
    mode: Option<String>,
    /// Trajectory length, or a comma-separated grid for `bench`.
    #[arg(long = "T", value_delimiter = ',')]
    t: Vec<usize>,
    /// `key = value` file with defaults for any option.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted, except for `bench`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// System bundle (matrices A, B, C, D, optional sigma_x, sigma_y).
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long = "sigma-y")]
    sigma_y: Option<f64>,
    #[arg(long = "sigma-x")]
    sigma_x: Option<f64>,
    /// Also write the simulated system as a bundle.
    #[arg(long = "system-out")]
    system_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    /// Trajectory CSV.
    #[arg(long)]
    input: PathBuf,
    /// FIR length (defaults to what denoising with --L and --base needs).
    #[arg(long = "fir-len")]
    fir_len: Option<usize>,
}

#[derive(Debug, Args)]
struct DenoiseArgs {
    #[command(flatten)]
    common: Common,
    /// FIR CSV.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Args)]
struct RealizeArgs {
    #[command(flatten)]
    common: Common,
    /// FIR CSV covering [0, 2L-1].
    #[arg(long)]
    input: PathBuf,
    /// Ground-truth system bundle for the IR-distance report.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Published setting 1..5 to start from.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=5))]
    setting: Option<u64>,
    #[arg(long = "n-systems")]
    n_systems: Option<usize>,
    #[arg(long = "sigma-y")]
    sigma_y: Option<f64>,
    #[arg(long = "sigma-x")]
    sigma_x: Option<f64>,
}

#[derive(Debug, Args)]
struct ConcArgs {
    #[command(flatten)]
    common: Common,
    /// gram_deviation, sigma_min, cross_gram or hinf_error.
    #[arg(long)]
    stat: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// System bundle for hinf_error (random system when omitted).
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long = "sigma-y")]
    sigma_y: Option<f64>,
}

/// Flag > config file > default, recording every resolved value.
struct Resolver {
    file: Option<ConfigFile>,
    echo: Vec<(String, String)>,
}

impl Resolver {
    fn new(common: &Common, allowed: &[&str]) -> Result<Self> {
        let file = match &common.config {
            Some(p) => {
                let f = ConfigFile::load(p)?;
                f.check_keys(allowed)?;
                Some(f)
            }
            None => None,
        };
        Ok(Self { file, echo: Vec::new() })
    }

    fn record(&mut self, key: &str, value: String) {
        self.echo.push((normalize_key(key), value));
    }

    fn get<T: FromStr + Display + Clone>(&mut self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        let v = self.get_opt(flag, key)?.unwrap_or(default);
        self.record(key, v.to_string());
        Ok(v)
    }

    fn get_f64(&mut self, flag: Option<f64>, key: &str, default: f64) -> Result<f64> {
        let v = self.get_opt(flag, key)?.unwrap_or(default);
        self.record(key, fmt_f64(v));
        Ok(v)
    }

    fn get_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match &self.file {
            Some(f) => f.get(key),
            None => Ok(None),
        }
    }

    fn get_list(&mut self, flag: &[usize], key: &str) -> Result<Option<Vec<usize>>> {
        if !flag.is_empty() {
            return Ok(Some(flag.to_vec()));
        }
        match &self.file {
            Some(f) => f.get_list(key),
            None => Ok(None),
        }
    }

    fn path(&mut self, flag: &Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        let p = match flag {
            Some(p) => Some(p.clone()),
            None => self.file.as_ref().and_then(|f| f.raw(key)).map(PathBuf::from),
        };
        if let Some(p) = &p {
            self.record(key, p.display().to_string());
        }
        Ok(p)
    }

    fn single_t(&mut self, flag: &[usize], default: usize) -> Result<usize> {
        let t = match self.get_list(flag, "T")? {
            None => default,
            Some(v) if v.len() == 1 => v[0],
            Some(v) => {
                return Err(SysIdError::InvalidArgument(format!(
                    "--T takes a single value here, got {} values",
                    v.len()
                )))
            }
        };
        self.record("T", t.to_string());
        Ok(t)
    }
}

fn base_of(v: u64) -> Result<Base> {
    Base::from_value(v as usize)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| {
            SysIdError::InvalidArgument(format!("cannot write {}: {e}", p.display()))
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| SysIdError::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}

const SYSTEM_KEYS: [&str; 11] = [
    "seed", "L", "d", "du", "dy", "lambda_max", "T", "system", "sigma_y", "sigma_x", "system_out",
];

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let c = &a.common;
    let mut r = Resolver::new(c, &[&SYSTEM_KEYS[..], &["out"]].concat())?;
    let seed = r.get(c.seed, "seed", 0u64)?;
    let t = r.single_t(&c.t, 1000)?;
    let sigma_y = r.get_f64(a.sigma_y, "sigma_y", 1.0)?;
    let sigma_x = r.get_f64(a.sigma_x, "sigma_x", 0.0)?;
    let sys = match r.path(&a.system, "system")? {
        Some(p) => {
            let b = Bundle::parse(&read_input(&p)?)?;
            let sys = b.to_system()?;
            // noise flags override the bundle only when given explicitly
            if a.sigma_y.is_some() || a.sigma_x.is_some() {
                sys.with_isotropic_noise(sigma_x, sigma_y)
            } else {
                sys
            }
        }
        None => {
            let d = r.get(c.d, "d", 1usize)?;
            let du = r.get(c.du, "du", 1usize)?;
            let dy = r.get(c.dy, "dy", 1usize)?;
            let lambda = r.get_f64(c.lambda_max, "lambda_max", 0.9)?;
            random_system(d, du, dy, lambda, derive_seed(seed, &[0]))?.with_isotropic_noise(sigma_x, sigma_y)
        }
    };
    let traj = simulate(&sys, t, derive_seed(seed, &[1]))?;
    if let Some(p) = r.path(&a.system_out, "system_out")? {
        let mut b = Bundle::from_system(&sys);
        b.comments = r.echo.clone();
        write_output(Some(&p), &b.format())?;
    }
    write_output(c.out.as_deref(), &format_trajectory(&traj, &r.echo))
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let c = &a.common;
    let mut r = Resolver::new(c, &["L", "base", "fir_len", "input", "out"])?;
    r.record("input", a.input.display().to_string());
    let (traj, _) = parse_trajectory(&read_input(&a.input)?)?;
    let fir_len = match r.get_opt(a.fir_len, "fir_len")? {
        Some(n) => n,
        None => {
            let l = r.get(c.l, "L", 27usize)?;
            let base = base_of(r.get(c.base, "base", 3u64)?)?;
            MultiscaleConfig::new(l, 1, base, DenoiseMode::None)?.required_fir_len()
        }
    };
    r.record("fir_len", fir_len.to_string());
    let fit = fir_least_squares(&traj, fir_len)?;
    r.record("residual_norm", fmt_f64(fit.residual_norm));
    r.record("gram_sigma_min", fmt_f64(fit.gram_sigma_min));
    write_output(c.out.as_deref(), &format_ir(&fit.ir, &r.echo))
}

fn multiscale_config(r: &mut Resolver, c: &Common) -> Result<MultiscaleConfig> {
    let l = r.get(c.l, "L", 27usize)?;
    let d = r.get(c.d, "d", 1usize)?;
    let base = base_of(r.get(c.base, "base", 3u64)?)?;
    let mode: DenoiseMode = r.get(c.mode.clone(), "mode", "multiscale".to_string())?.parse()?;
    MultiscaleConfig::new(l, d, base, mode)
}

fn cmd_denoise(a: &DenoiseArgs) -> Result<()> {
    let c = &a.common;
    let mut r = Resolver::new(c, &["L", "d", "base", "mode", "input", "out"])?;
    r.record("input", a.input.display().to_string());
    let cfg = multiscale_config(&mut r, c)?;
    let (f, _) = parse_ir(&read_input(&a.input)?)?;
    let g = denoise(&f, &cfg)?;
    write_output(c.out.as_deref(), &format_ir(&g, &r.echo))
}

fn cmd_realize(a: &RealizeArgs) -> Result<()> {
    let c = &a.common;
    let mut r = Resolver::new(c, &["L", "d", "input", "reference", "out"])?;
    r.record("input", a.input.display().to_string());
    let l = r.get(c.l, "L", 27usize)?;
    let d = r.get(c.d, "d", 1usize)?;
    let (f, _) = parse_ir(&read_input(&a.input)?)?;
    let real = ho_kalman(&f, l, d)?;
    let mut report = vec![("sigma_min_hminus".to_string(), fmt_f64(real.sigma_min_hminus))];
    if let Some(p) = r.path(&a.reference, "reference")? {
        let sys = Bundle::parse(&read_input(&p)?)?.to_system()?;
        report.push(("ir_distance".into(), fmt_f64(ir_distance(&sys, &real, 2 * l))));
        match align_similarity(&sys, &real, l) {
            Ok(al) => {
                report.push(("err_a".into(), fmt_f64(al.err_a)));
                report.push(("err_b".into(), fmt_f64(al.err_b)));
                report.push(("err_c".into(), fmt_f64(al.err_c)));
            }
            Err(e) => report.push(("alignment".into(), format!("unavailable ({e})"))),
        }
    }
    let mut b = Bundle::from_realization(&real);
    b.comments = r.echo.clone();
    b.comments.extend(report.iter().cloned());
    write_output(c.out.as_deref(), &b.format())?;
    if c.out.is_some() {
        for (k, v) in &report {
            println!("{k} = {v}");
        }
    }
    Ok(())
}

const BENCH_KEYS: [&str; 13] = [
    "setting", "seed", "d", "du", "dy", "L", "lambda_max", "base", "T", "n_systems", "sigma_y", "sigma_x", "out",
];

fn bench_config(a: &BenchArgs, r: &mut Resolver) -> Result<ExperimentConfig> {
    let c = &a.common;
    let setting = r.get_opt(a.setting, "setting")?.unwrap_or(1);
    let seed = r.get_opt(c.seed, "seed")?.unwrap_or(0);
    let mut cfg = ExperimentConfig::preset(setting as usize, seed)?;
    let custom = [c.d, c.du, c.dy, c.l].iter().any(Option::is_some)
        || c.lambda_max.is_some()
        || c.base.is_some()
        || r.file.as_ref().is_some_and(|f| {
            f.keys().any(|k| ["d", "du", "dy", "L", "lambda_max", "base"].contains(&k))
        });
    if custom {
        cfg.setting = "custom".into();
    }
    cfg.d = r.get_opt(c.d, "d")?.unwrap_or(cfg.d);
    cfg.d_u = r.get_opt(c.du, "du")?.unwrap_or(cfg.d_u);
    cfg.d_y = r.get_opt(c.dy, "dy")?.unwrap_or(cfg.d_y);
    cfg.horizon = r.get_opt(c.l, "L")?.unwrap_or(cfg.horizon);
    cfg.lambda_max = r.get_opt(c.lambda_max, "lambda_max")?.unwrap_or(cfg.lambda_max);
    if let Some(b) = r.get_opt(c.base, "base")? {
        cfg.base = base_of(b)?;
    }
    cfg.t_grid = match r.get_list(&c.t, "T")? {
        Some(grid) => grid,
        None => {
            MultiscaleConfig::new(cfg.horizon, cfg.d, cfg.base, DenoiseMode::Multiscale)?;
            cfg.default_grid()
        }
    };
    cfg.n_systems = r.get_opt(a.n_systems, "n_systems")?.unwrap_or(cfg.n_systems);
    cfg.sigma_y_scale = r.get_opt(a.sigma_y, "sigma_y")?.unwrap_or(cfg.sigma_y_scale);
    cfg.sigma_x_scale = r.get_opt(a.sigma_x, "sigma_x")?.unwrap_or(cfg.sigma_x_scale);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let mut r = Resolver::new(&a.common, &BENCH_KEYS)?;
    let cfg = bench_config(a, &mut r)?;
    let out = r
        .path(&a.common.out, "out")?
        .unwrap_or_else(|| PathBuf::from("bench.csv"));
    let result = run_experiment(&cfg)?;
    export_csv(&result, &out)?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("bench");
    let script = out.with_file_name(format!("{stem}_plot.py"));
    emit_plot_script(&out, &script)?;
    println!("wrote {} and {}", out.display(), script.display());
    Ok(())
}

fn cmd_conc(a: &ConcArgs) -> Result<()> {
    let c = &a.common;
    let mut r = Resolver::new(
        c,
        &["stat", "seed", "T", "L", "du", "dy", "d", "lambda_max", "trials", "system", "sigma_y", "out"],
    )?;
    let stat: ConcStat = r.get(a.stat.clone(), "stat", "gram_deviation".to_string())?.parse()?;
    let seed = r.get(c.seed, "seed", 0u64)?;
    let t = r.single_t(&c.t, 2000)?;
    let l = r.get(c.l, "L", 16usize)?;
    let trials = r.get(a.trials, "trials", 200usize)?;
    let mut sys_used: Option<StateSpaceSystem> = None;
    let reports: Vec<ConcTrialReport> = match stat {
        ConcStat::HinfError => {
            let sigma_y = r.get_f64(a.sigma_y, "sigma_y", 1.0)?;
            let sys = match r.path(&a.system, "system")? {
                Some(p) => Bundle::parse(&read_input(&p)?)?.to_system()?,
                None => {
                    let d = r.get(c.d, "d", 2usize)?;
                    let du = r.get(c.du, "du", 1usize)?;
                    let dy = r.get(c.dy, "dy", 1usize)?;
                    let lambda = r.get_f64(c.lambda_max, "lambda_max", 0.5)?;
                    random_system(d, du, dy, lambda, derive_seed(seed, &[0]))?
                }
            }
            .with_isotropic_noise(0.0, sigma_y);
            let reps = regression_hinf_trials(&sys, t, l, trials, derive_seed(seed, &[1]))?;
            sys_used = Some(sys);
            reps
        }
        _ => {
            let du = r.get(c.du, "du", 1usize)?;
            let f: fn(usize, usize, usize, usize, u64) -> Result<ConcTrialReport> = match stat {
                ConcStat::GramDeviation => gram_deviation_trials,
                ConcStat::SigmaMin => sigma_min_trials,
                _ => cross_gram_trials,
            };
            vec![f(t, l, du, trials, seed)?]
        }
    };
    let mut echo = r.echo.clone();
    let mut summary = Vec::new();
    for rep in &reports {
        let label = rep.label();
        echo.push((format!("{label}.normalizer"), fmt_f64(rep.normalizer)));
        echo.push((format!("{label}.q95_normalized"), fmt_f64(rep.normalized_quantile(0.95))));
        let mut line = format!(
            "{label}: median {:.6e}, q95 {:.6e}, q95/rate {:.4}",
            rep.quantiles.median,
            rep.quantiles.q95,
            rep.normalized_quantile(0.95)
        );
        if let Some(freq) = rep.event_frequency {
            echo.push((format!("{label}.event_frequency"), fmt_f64(freq)));
            line.push_str(&format!(", P(sigma_min >= T/2) = {freq:.3}"));
        }
        summary.push(line);
    }
    let rows: Vec<_> = reports.iter().map(|rep| conc_rows(rep, sys_used.as_ref())).collect();
    let mut buf = Vec::new();
    write_rows(&mut buf, &echo, &rows)?;
    write_output(c.out.as_deref(), std::str::from_utf8(&buf).expect("utf-8 CSV"))?;
    if c.out.is_some() {
        for line in summary {
            println!("{line}");
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Denoise(a) => cmd_denoise(a),
        Command::Realize(a) => cmd_realize(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Conc(a) => cmd_conc(a),
    }
}

fn exit_code(e: &SysIdError) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Some(n),
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return 1;
            }
        },
        Err(_) => None,
    };
    let outcome = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => {
                eprintln!("error: cannot start {n} worker threads: {e}");
                return 1;
            }
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
