//! Command-line front end: JSON models and configs in, CSV and JSON out.
//!
//! Every command returns a one-line JSON summary; `check` additionally maps its
//! verdict to the process exit code.

pub mod config;
pub mod error;
pub mod points;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use sigrf::equivalence::{check_pair, CheckOptions, RuleChoice, Verdict};
use sigrf::experiments::{llr_study, log_space, norm_ratio_study, LlrStudyConfig};
use sigrf::model::{validate, HFormDensity, SpectralModel};
use sigrf::quadrature::{covariance_matrix, variogram, QuadratureConfig};
use sigrf::rkhs::check_diagonal_bounds;
use sigrf::simulate::{
    encode_binary, sample_batch, write_csv, CholeskySampler, GridSpec, Method, SpectralSampler, CHOLESKY_CAP,
};

use crate::config::{FieldFormat, RunConfig};
pub use crate::error::{CliError, EXIT_COMPUTE, EXIT_INPUT};
use crate::points::{parse_point, parse_point_list};

pub const EXIT_EQUIVALENT: i32 = 0;
pub const EXIT_SINGULAR: i32 = 10;
pub const EXIT_UNKNOWN: i32 = 20;

/// Environment variable overriding the output directory of the config file.
pub const OUT_DIR_ENV: &str = "SIGRF_OUT_DIR";

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ntarget: ",
    env!("SIGRF_BUILD_TARGET"),
    "\nprofile: ",
    env!("SIGRF_BUILD_PROFILE"),
);

#[derive(Debug, Parser)]
#[command(name = "sigrf", version, long_version = LONG_VERSION, about = "Gaussian random fields with stationary increments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Base seed; sample and replication `k` use `seed + k`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides the config file).
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 1 gives serial runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the quadrature relative tolerance.
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide equivalence of two models; exit 0 equivalent, 10 singular, 20 unknown.
    Check(CheckArgs),
    /// Variogram v(t) at a list of lags.
    Variogram(PointsArgs),
    /// Covariance matrix at a list of points.
    Covariance(PointsArgs),
    /// Sample fields on a cubic grid.
    Simulate(SimulateArgs),
    /// Finite-rank reproducing kernel diagnostics.
    Kernel(KernelArgs),
    /// Log-likelihood-ratio study over nested grids.
    Llr(LlrArgs),
    /// Variogram ratio of two H-form models along one axis.
    Normratio(NormRatioArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Check(_) => "check",
            Command::Variogram(_) => "variogram",
            Command::Covariance(_) => "covariance",
            Command::Simulate(_) => "simulate",
            Command::Kernel(_) => "kernel",
            Command::Llr(_) => "llr",
            Command::Normratio(_) => "normratio",
        }
    }
}

fn serde_value<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.to_owned())).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    pub model0: Option<PathBuf>,
    pub model1: Option<PathBuf>,
    /// auto, mixture, discrete, hform or tail.
    #[arg(long, value_parser = serde_value::<RuleChoice>)]
    pub rule: Option<RuleChoice>,
    /// Inner radius of the tail rule.
    #[arg(long)]
    pub k: Option<f64>,
    /// Required decay margin of the tail rule.
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub shells: Option<usize>,
    #[arg(long)]
    pub n_cut: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PointsArgs {
    pub model: Option<PathBuf>,
    /// One point, coordinates separated by commas; repeatable.
    #[arg(long = "t", allow_hyphen_values = true)]
    pub t: Vec<String>,
    /// Point-list file.
    #[arg(long)]
    pub points: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub t_half: Option<f64>,
    /// Odd number of grid points per axis.
    #[arg(long)]
    pub points_per_axis: Option<usize>,
    /// spectral or cholesky.
    #[arg(long, value_parser = serde_value::<Method>)]
    pub method: Option<Method>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<FieldFormat>,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub t_half: Option<f64>,
    /// Anchor counts, e.g. `8,16,32`.
    #[arg(long, value_delimiter = ',')]
    pub refinements: Option<Vec<usize>>,
    /// Point-list file of small frequencies.
    #[arg(long)]
    pub small: Option<PathBuf>,
    /// Point-list file of large frequencies.
    #[arg(long)]
    pub large: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LlrArgs {
    pub model0: Option<PathBuf>,
    pub model1: Option<PathBuf>,
    #[arg(long)]
    pub t_half: Option<f64>,
    /// Points per axis of each nested grid, e.g. `17,33,65`.
    #[arg(long, value_delimiter = ',')]
    pub grids: Option<Vec<usize>>,
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct NormRatioArgs {
    /// Comma-separated H of the first model.
    #[arg(long, value_delimiter = ',')]
    pub h0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub h1: Option<Vec<f64>>,
    /// 0-based axis.
    #[arg(long)]
    pub axis: Option<usize>,
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
}

/// Exit code plus the one-line summary printed on stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: Value,
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Parses and validates a model file.
pub fn load_model(path: &Path) -> Result<SpectralModel, CliError> {
    let text = read_text(path)?;
    let model: SpectralModel = serde_json::from_str(&text).map_err(|e| CliError::json(path, &e))?;
    validate(&model)
        .into_result()
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(model)
}

fn load_points(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    parse_point_list(&read_text(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn required<T>(v: Option<T>, what: &str, cmd: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::input(format!("{cmd}: missing {what} (argument or config)")))
}

fn require_dim(points: &[Vec<f64>], d: usize) -> Result<(), CliError> {
    match points.iter().find(|p| p.len() != d) {
        Some(p) => Err(CliError::input(format!(
            "point has {} coordinates but the model has dimension {d}",
            p.len()
        ))),
        None => Ok(()),
    }
}

/// Settings shared by every command after merging flags, environment and config.
struct Context {
    seed: u64,
    out: Option<PathBuf>,
    quadrature: QuadratureConfig,
    cfg: RunConfig,
}

impl Context {
    fn new(g: &GlobalArgs) -> Result<Self, CliError> {
        let cfg = match &g.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(n) = g.threads.or(cfg.threads) {
            if n == 0 {
                return Err(CliError::input("--threads must be at least 1"));
            }
            // a global pool may already exist when called repeatedly in-process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        let mut quadrature = cfg.quadrature.clone().unwrap_or_default();
        if let Some(r) = g.rel_tol {
            quadrature.rel_tol = r;
        }
        quadrature.check()?;
        Ok(Self {
            seed: g.seed.or(cfg.seed).unwrap_or(0),
            out: g.out.clone().or_else(|| cfg.output_dir.clone()),
            quadrature,
            cfg,
        })
    }

    /// The output directory, created on first use; defaults to the working directory.
    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| {
        CliError::input(format!("cannot write {}: {e}", path.display()))
    })?))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let ctx = Context::new(&cli.global)?;
    match &cli.command {
        Command::Check(a) => cmd_check(&ctx, a),
        Command::Variogram(a) => cmd_variogram(&ctx, a),
        Command::Covariance(a) => cmd_covariance(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Kernel(a) => cmd_kernel(&ctx, a),
        Command::Llr(a) => cmd_llr(&ctx, a),
        Command::Normratio(a) => cmd_normratio(&ctx, a),
    }
}

/// Parses `args` as command-line words (program name first) and runs them.
/// Usage errors are returned as input errors instead of exiting.
pub fn run_from<I, S>(args: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::input(e.to_string()))?;
    run(&cli)
}

pub fn verdict_exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Equivalent => EXIT_EQUIVALENT,
        Verdict::Singular => EXIT_SINGULAR,
        Verdict::Unknown => EXIT_UNKNOWN,
    }
}

fn cmd_check(ctx: &Context, a: &CheckArgs) -> Result<Outcome, CliError> {
    let sec = ctx.cfg.check.clone().unwrap_or_default();
    let m0 = load_model(&required(a.model0.clone().or(sec.model0), "model0", "check")?)?;
    let m1 = load_model(&required(a.model1.clone().or(sec.model1), "model1", "check")?)?;
    let mut opts = CheckOptions::default();
    if let Some(r) = a.rule.or(sec.rule) {
        opts.rule = r;
    }
    if let Some(k) = a.k.or(sec.k) {
        opts.tail.k = k;
    }
    if let Some(m) = a.margin.or(sec.margin) {
        opts.tail.margin = m;
    }
    if let Some(s) = a.shells.or(sec.shells) {
        opts.tail.shells = s;
    }
    if let Some(n) = a.n_cut.or(sec.n_cut) {
        opts.n_cut = n;
    }
    let out = match &ctx.out {
        Some(_) => Some(ctx.out_dir()?),
        None => None,
    };
    let verdict = check_pair(&m0, &m1, &opts, &ctx.quadrature)?;
    let mut summary = json!({ "command": "check" });
    let body = serde_json::to_value(&verdict).expect("verdicts serialize");
    summary
        .as_object_mut()
        .expect("object")
        .extend(body.as_object().expect("verdict is an object").clone());
    if let Some(dir) = out {
        let path = dir.join("verdict.json");
        fs::write(&path, verdict.to_json())?;
        summary["output"] = json!(path_str(&path));
    }
    Ok(Outcome {
        exit_code: verdict_exit_code(verdict.verdict),
        summary,
    })
}

/// Points from `--t`, then `--points`, then the config block.
fn gather_points(a: &PointsArgs, sec: &config::PointsSection) -> Result<Option<Vec<Vec<f64>>>, CliError> {
    if !a.t.is_empty() {
        let pts = a
            .t
            .iter()
            .map(|s| parse_point(s, 1).map_err(|e| CliError::input(format!("--t {s}: {}", e.message))))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(Some(pts));
    }
    if let Some(p) = a.points.as_ref().or(sec.points_file.as_ref()) {
        return load_points(p).map(Some);
    }
    Ok(sec.points.clone())
}

fn cmd_variogram(ctx: &Context, a: &PointsArgs) -> Result<Outcome, CliError> {
    let sec = ctx.cfg.variogram.clone().unwrap_or_default();
    let model = load_model(&required(a.model.clone().or(sec.model.clone()), "model", "variogram")?)?;
    let pts = required(gather_points(a, &sec)?, "lags (--t or --points)", "variogram")?;
    require_dim(&pts, model.dim())?;
    let dir = ctx.out_dir()?;
    let est = pts
        .par_iter()
        .map(|t| variogram(&model, t, &ctx.quadrature))
        .collect::<sigrf::Result<Vec<_>>>()?;
    let path = dir.join("variogram.csv");
    let mut w = create(&path)?;
    let header: Vec<String> = (0..model.dim()).map(|j| format!("t{j}")).collect();
    writeln!(w, "{},value,error_estimate,truncation_bound,converged", header.join(","))?;
    for (t, e) in pts.iter().zip(&est) {
        for x in t {
            write!(w, "{x},")?;
        }
        writeln!(w, "{:e},{:e},{:e},{}", e.value, e.error_estimate, e.truncation_bound, e.converged)?;
    }
    w.flush()?;
    let values: Vec<f64> = est.iter().map(|e| e.value).collect();
    let max_unc = est.iter().map(|e| e.uncertainty()).fold(0.0, f64::max);
    Ok(Outcome {
        exit_code: 0,
        summary: json!({
            "command": "variogram",
            "count": values.len(),
            "values": values,
            "max_uncertainty": max_unc,
            "converged": est.iter().all(|e| e.converged),
            "output": path_str(&path),
        }),
    })
}

fn cmd_covariance(ctx: &Context, a: &PointsArgs) -> Result<Outcome, CliError> {
    let sec = ctx.cfg.covariance.clone().unwrap_or_default();
    let model = load_model(&required(a.model.clone().or(sec.model.clone()), "model", "covariance")?)?;
    let pts = required(gather_points(a, &sec)?, "points (--t or --points)", "covariance")?;
    require_dim(&pts, model.dim())?;
    let dir = ctx.out_dir()?;
    let cov = covariance_matrix(&model, &pts, &ctx.quadrature)?;
    let n = pts.len();
    let path = dir.join("covariance.csv");
    let mut w = create(&path)?;
    let header: Vec<String> = (0..n).map(|j| format!("c{j}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:e}", cov.matrix[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    let trace = cov.matrix.trace();
    let min_eig = cov.matrix.clone().symmetric_eigenvalues().min();
    Ok(Outcome {
        exit_code: 0,
        summary: json!({
            "command": "covariance",
            "n": n,
            "trace": trace,
            "min_eigenvalue": min_eig,
            "psd": min_eig >= -1e-8 * trace / n as f64,
            "max_uncertainty": cov.max_uncertainty,
            "converged": cov.converged,
            "output": path_str(&path),
        }),
    })
}

fn cmd_simulate(ctx: &Context, a: &SimulateArgs) -> Result<Outcome, CliError> {
    let sec = ctx.cfg.simulate.clone().unwrap_or_default();
    let model = load_model(&required(a.model.clone().or(sec.model.clone()), "model", "simulate")?)?;
    let grid = GridSpec::new(
        a.t_half.or(sec.t_half).unwrap_or(1.0),
        a.points_per_axis.or(sec.points_per_axis).unwrap_or(17),
        model.dim(),
    )?;
    let method = a.method.or(sec.method).unwrap_or(Method::Spectral);
    let n = a.samples.or(sec.samples).unwrap_or(1);
    if n == 0 {
        return Err(CliError::input("simulate: --samples must be at least 1"));
    }
    let format = a.format.or(sec.format).unwrap_or(FieldFormat::Csv);
    let dir = ctx.out_dir()?;
    let samples = match method {
        Method::Spectral => {
            let s = SpectralSampler::new(&model, grid, &sec.synthesis.clone().unwrap_or_default())?;
            sample_batch(|seed| s.sample(seed), ctx.seed, n)
        }
        Method::Cholesky => {
            let s = CholeskySampler::new(&model, grid, &ctx.quadrature, CHOLESKY_CAP)?;
            sample_batch(|seed| s.sample(seed), ctx.seed, n)
        }
    };
    let mut files = Vec::new();
    for (k, s) in samples.iter().enumerate() {
        if matches!(format, FieldFormat::Csv | FieldFormat::Both) {
            let p = dir.join(format!("sample_{k:04}.csv"));
            let mut w = create(&p)?;
            write_csv(s, &mut w)?;
            w.flush()?;
            files.push(path_str(&p));
        }
        if matches!(format, FieldFormat::Binary | FieldFormat::Both) {
            let p = dir.join(format!("sample_{k:04}.bin"));
            fs::write(&p, encode_binary(s))?;
            files.push(path_str(&p));
        }
    }
    Ok(Outcome {
        exit_code: 0,
        summary: json!({
            "command": "simulate",
            "method": method,
            "seed": ctx.seed,
            "samples": n,
            "points": grid.len(),
            "meta": samples[0].meta,
            "files": files,
        }),
    })
}

/// `s·e_j` for every axis `j` and scale `s`.
fn axis_probes(d: usize, scales: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for j in 0..d {
        for &s in scales {
            let mut p = vec![0.0; d];
            p[j] = s;
            out.push(p);
        }
    }
    out
}

fn cmd_kernel(ctx: &Context, a: &KernelArgs) -> Result<Outcome, CliError> {
    let sec = ctx.cfg.kernel.clone().unwrap_or_default();
    let model = load_model(&required(a.model.clone().or(sec.model.clone()), "model", "kernel")?)?;
    let d = model.dim();
    let small = match &a.small {
        Some(p) => load_points(p)?,
        None => sec.small.clone().unwrap_or_else(|| axis_probes(d, &[0.01, 0.02, 0.05, 0.1])),
    };
    let large = match &a.large {
        Some(p) => load_points(p)?,
        None => sec.large.clone().unwrap_or_else(|| axis_probes(d, &[10.0, 20.0, 40.0])),
    };
    require_dim(&small, d)?;
    require_dim(&large, d)?;
    let refinements = a
        .refinements
        .clone()
        .or(sec.refinements)
        .unwrap_or_else(|| vec![8, 16, 32]);
    let t_half = a.t_half.or(sec.t_half).unwrap_or(1.0);
    let dir = ctx.out_dir()?;
    let diag = check_diagonal_bounds(&model, t_half, &refinements, &small, &large, &ctx.quadrature)?;
    let csv = dir.join("kernel.csv");
    let mut w = create(&csv)?;
    diag.write_csv(&mut w)?;
    w.flush()?;
    let js = dir.join("kernel.json");
    fs::write(&js, serde_json::to_string_pretty(&diag.levels).expect("levels serialize"))?;
    let residual = diag.levels.iter().map(|l| l.reproducing_residual).fold(0.0, f64::max);
    Ok(Outcome {
        exit_code: 0,
        summary: json!({
            "command": "kernel",
            "refinements": refinements,
            "small_growth": diag.small_growth,
            "large_growth": diag.large_growth,
            "max_residual": residual,
            "violation": diag.violation,
            "output": [path_str(&csv), path_str(&js)],
        }),
    })
}

fn cmd_llr(ctx: &Context, a: &LlrArgs) -> Result<Outcome, CliError> {
    let sec = ctx.cfg.llr.clone().unwrap_or_default();
    let m0 = load_model(&required(a.model0.clone().or(sec.model0), "model0", "llr")?)?;
    let m1 = load_model(&required(a.model1.clone().or(sec.model1), "model1", "llr")?)?;
    let t_half = a.t_half.or(sec.t_half).unwrap_or(1.0);
    let grids = a
        .grids
        .clone()
        .or(sec.grids)
        .unwrap_or_else(|| vec![17, 33, 65])
        .into_iter()
        .map(|p| GridSpec::new(t_half, p, m0.dim()))
        .collect::<sigrf::Result<Vec<_>>>()?;
    let cfg = LlrStudyConfig {
        model0: m0,
        model1: m1,
        grids,
        n_replications: a.replications.or(sec.replications).unwrap_or(200),
        seed: ctx.seed,
        quadrature: ctx.quadrature.clone(),
    };
    cfg.check()?;
    let dir = ctx.out_dir()?;
    let study = llr_study(&cfg)?;
    let csv = dir.join("llr.csv");
    let mut w = create(&csv)?;
    study.write_csv(&mut w)?;
    w.flush()?;
    let js = dir.join("llr_summary.json");
    fs::write(&js, study.summary_json())?;
    let all_zero = study.llr.iter().flatten().all(|v| *v == 0.0);
    let grids: Vec<Value> = study
        .grids
        .iter()
        .map(|g| json!({ "n_points": g.n_points, "median_abs": g.median_abs, "iqr": g.iqr, "growth_ratio": g.growth_ratio }))
        .collect();
    Ok(Outcome {
        exit_code: 0,
        summary: json!({
            "command": "llr",
            "seed": ctx.seed,
            "replications": cfg.n_replications,
            "all_zero": all_zero,
            "grids": grids,
            "output": [path_str(&csv), path_str(&js)],
        }),
    })
}

fn cmd_normratio(ctx: &Context, a: &NormRatioArgs) -> Result<Outcome, CliError> {
    let sec = ctx.cfg.normratio.clone().unwrap_or_default();
    let h0 = HFormDensity::new(required(a.h0.clone().or(sec.h0), "h0", "normratio")?);
    let h1 = HFormDensity::new(required(a.h1.clone().or(sec.h1), "h1", "normratio")?);
    for h in [&h0, &h1] {
        validate(&SpectralModel::Hform(h.clone())).into_result()?;
    }
    let axis = a.axis.or(sec.axis).unwrap_or(0);
    let t_min = a.t_min.or(sec.t_min).unwrap_or(1e-3);
    let t_max = a.t_max.or(sec.t_max).unwrap_or(1e-1);
    let count = a.count.or(sec.count).unwrap_or(9);
    if !(t_min > 0.0 && t_max > t_min && count >= 2) {
        return Err(CliError::input("normratio: need 0 < t_min < t_max and count ≥ 2"));
    }
    let dir = ctx.out_dir()?;
    let study = norm_ratio_study(&h0, &h1, axis, &log_space(t_min, t_max, count), &ctx.quadrature)?;
    let csv = dir.join("normratio.csv");
    let mut w = create(&csv)?;
    study.write_csv(&mut w)?;
    w.flush()?;
    Ok(Outcome {
        exit_code: 0,
        summary: json!({
            "command": "normratio",
            "axis": axis,
            "slope": study.slope,
            "predicted_slope": study.predicted_slope,
            "output": path_str(&csv),
        }),
    })
}
