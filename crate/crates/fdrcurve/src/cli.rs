//! `fdrcurve` subcommands. Each run writes its artifacts plus a
//! `manifest.json` into one run directory; outputs depend only on the model
//! file and flags, never on `--threads`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fdrcurve_core::hjb::gaussian_z_axes;
use fdrcurve_core::sim::{simulate_spde_grid, Scheme};
use fdrcurve_core::{
    admissibility_estimate, check_invariance, extract_state, implied_spot, linalg, reconstruct_curve, solve_hjb,
    standard_perturbations, validate_spec, verify_candidate, Axis, FdrError, HjbGrid, InvarianceGrid,
    Level, McParams, Measure, PathBundle, PathSimulator, Realization, Strategy, Utility, ValidationReport,
    ValueFunction, WealthForm,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::model::{fixture, parse_model, parse_model_unchecked, ModelSpecFile};
use crate::output::{curve_rows, sha256_hex, wealth_rows, z_rows, RunDir};
use crate::quotes::ingest_quotes;
use crate::MarketError;

/// Largest invariance residual `validate` accepts.
pub const INVARIANCE_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "fdrcurve", version, about = "Futures-curve realizations, simulation and HJB control")]
pub struct Cli {
    /// Worker threads (default: all cores). Never changes the outputs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Parent directory for timestamped run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Write into exactly this directory instead.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the volatility assumptions and the invariance conditions.
    Validate(ValidateArgs),
    /// Simulate the coordinate process.
    Simulate(SimulateArgs),
    /// Curve at a given state, or a grid-SPDE run paired with the realization.
    Reconstruct(ReconstructArgs),
    /// Recover the state from benchmark quotes.
    Extract(ExtractArgs),
    /// Simulate wealth under a strategy.
    Wealth(WealthArgs),
    /// Solve the HJB equation on a grid.
    Solve(SolveArgs),
    /// Check a `solve` output by residuals and Monte Carlo.
    Verify(VerifyArgs),
    /// Spot price implied by the two-factor state.
    Spot(SpotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureArg {
    P,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Auto,
    Exact,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormArg {
    Reduced,
    Diffusion,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArg {
    /// Model file, or the name of a bundled fixture (`gs_two_factor`, `bjork_gombani`).
    #[arg(value_name = "MODEL", default_value = "gs_two_factor")]
    pub model: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 10)]
    pub times: usize,
    #[arg(long, default_value_t = 10)]
    pub states: usize,
    #[arg(long, default_value_t = 50)]
    pub maturities: usize,
    #[arg(long, default_value_t = 2.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 2.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 10.0)]
    pub y_max: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct PathArgs {
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 100)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial state, comma separated (default: origin).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub z0: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub path: PathArgs,
    #[arg(long, value_enum, default_value_t = MeasureArg::P)]
    pub measure: MeasureArg,
    #[arg(long, value_enum, default_value_t = SchemeArg::Auto)]
    pub scheme: SchemeArg,
}

#[derive(Debug, Args, Serialize)]
pub struct ReconstructArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    /// State, comma separated (default: origin).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub z: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
    #[arg(long, default_value_t = 10.0)]
    pub y_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dy: f64,
    /// Run the grid SPDE on one simulated path (from `--z` over `--horizon`)
    /// and write both curves and their discrepancy.
    #[arg(long)]
    pub spde: bool,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = MeasureArg::P)]
    pub measure: MeasureArg,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    /// CSV with header `y,price` and one row per state dimension.
    #[arg(long)]
    pub quotes: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct WealthArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub path: PathArgs,
    /// `zero`, `constant:g1,g2,..`, `rollover:y` or `feedback:<solve run dir>`.
    #[arg(long, default_value = "zero")]
    pub strategy: String,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub x0: f64,
    #[arg(long, value_enum, default_value_t = FormArg::Diffusion)]
    pub form: FormArg,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    /// `exp:<rho>`, `power:<gamma>` or `log`.
    #[arg(long, default_value = "exp:1")]
    pub utility: String,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    pub x_min: f64,
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    pub x_max: f64,
    #[arg(long, default_value_t = 61)]
    pub nx: usize,
    #[arg(long, default_value_t = 21)]
    pub nz: usize,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Stored levels every this many steps (plus both ends).
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    /// Half-width of the z boxes in standard deviations of Z_T.
    #[arg(long, default_value_t = 6.0)]
    pub width: f64,
    /// State the z boxes are centred on (default: origin).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub z0: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// Run directory written by `solve`.
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub x0: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub z0: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Size of the `γ* ± δ e_i` perturbations.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SpotArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub z: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
}

/// Parses `argv` (program name first) and runs; returns the exit code.
pub fn run_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns the run directory.
pub fn run(cli: &Cli) -> Result<PathBuf, MarketError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(MarketError::Usage("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| MarketError::Domain(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let start = Instant::now();
    let mut dir = RunDir::create(&cli.out, cli.run_dir.as_deref())?;
    let outcome = pool.install(|| dispatch(&cli.command, &mut dir));
    dir.write_timing(start.elapsed().as_secs_f64(), threads)?;
    outcome.map(|_| dir.path().to_path_buf())
}

fn dispatch(command: &Command, dir: &mut RunDir) -> Result<(), MarketError> {
    match command {
        Command::Validate(a) => validate(a, dir),
        Command::Simulate(a) => simulate(a, dir),
        Command::Reconstruct(a) => reconstruct(a, dir),
        Command::Extract(a) => extract(a, dir),
        Command::Wealth(a) => wealth(a, dir),
        Command::Solve(a) => solve(a, dir),
        Command::Verify(a) => verify(a, dir),
        Command::Spot(a) => spot(a, dir),
    }
}

struct LoadedModel {
    text: String,
    spec: ModelSpecFile,
    realization: Realization,
}

fn read_model_text(arg: &str) -> Result<String, MarketError> {
    if let Some(text) = fixture(arg) {
        return Ok(text.to_string());
    }
    fs::read_to_string(arg).map_err(|e| MarketError::Io(format!("{arg}: {e}")))
}

fn load_model(arg: &str) -> Result<LoadedModel, MarketError> {
    let text = read_model_text(arg)?;
    let spec = parse_model(&text)?;
    let realization = spec.realization()?;
    Ok(LoadedModel { text, spec, realization })
}

fn state_or_origin(z: &[f64], d: usize, flag: &str) -> Result<Vec<f64>, MarketError> {
    match z.len() {
        0 => Ok(vec![0.0; d]),
        n if n == d => Ok(z.to_vec()),
        n => Err(MarketError::Usage(format!("--{flag} has {n} entries, the model state has {d}"))),
    }
}

fn args_json<T: Serialize>(a: &T) -> Value {
    serde_json::to_value(a).expect("arguments serialize")
}

fn measure(m: MeasureArg) -> Measure {
    match m {
        MeasureArg::P => Measure::P,
        MeasureArg::Q => Measure::Q,
    }
}

fn validation_json(report: &ValidationReport) -> Value {
    json!({
        "passed": report.passed(),
        "checks": report.checks.iter().map(|c| json!({
            "name": c.name,
            "passed": c.passed,
            "worst_ratio": c.worst_ratio,
            "detail": c.detail,
        })).collect::<Vec<_>>(),
        "limits_at_infinity": report.limits_at_infinity,
        "decays_at_infinity": report.decays_at_infinity,
    })
}

fn mat_a_rows(r: &Realization) -> Vec<Vec<f64>> {
    let a = r.mat_a();
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

fn validate(a: &ValidateArgs, dir: &mut RunDir) -> Result<(), MarketError> {
    let text = read_model_text(&a.model.model)?;
    let spec = parse_model_unchecked(&text)?;
    let vol = spec.volatility_spec()?;
    let (report, failure) = match validate_spec(&vol, spec.alpha) {
        Ok(r) => (r, None),
        Err(FdrError::Spec { assumption, report }) => (report, Some(assumption)),
        Err(e) => return Err(e.into()),
    };
    let mut out = json!({ "validation": validation_json(&report) });
    let mut passed = failure.is_none();
    if passed {
        let r = spec.realization()?;
        let grid = InvarianceGrid::standard(r.dim(), a.times, a.states, a.maturities, a.t_max, a.radius, a.y_max);
        let inv = check_invariance(&r, &grid);
        passed = inv.max() <= INVARIANCE_TOL;
        out["dimension"] = json!(r.dim());
        out["mat_a"] = json!(mat_a_rows(&r));
        out["invariance"] = json!({
            "drift": inv.drift,
            "volatility": inv.volatility,
            "ode": inv.ode,
            "max": inv.max(),
            "points": inv.points,
            "tolerance": INVARIANCE_TOL,
        });
    } else {
        out["failed_assumption"] = json!(failure);
    }
    out["passed"] = json!(passed);
    dir.write_json("validate.json", &out)?;
    print!("{}", crate::output::to_json(&out));
    dir.write_manifest("validate", &sha256_hex(text.as_bytes()), None, args_json(a))?;
    if passed {
        Ok(())
    } else {
        Err(MarketError::Domain("model failed validation".into()))
    }
}

fn simulator<'a>(r: &'a Realization, p: &PathArgs, m: MeasureArg, s: SchemeArg) -> Result<PathSimulator<'a>, MarketError> {
    let z0 = state_or_origin(&p.z0, r.dim(), "z0")?;
    let sim = PathSimulator::new(r, &z0, p.horizon, p.dt, measure(m), p.seed)?;
    Ok(match s {
        SchemeArg::Auto => sim,
        SchemeArg::Exact => {
            if r.constant_kappa().is_none() {
                return Err(MarketError::Usage("exact scheme needs constant volatility coefficients".into()));
            }
            sim.with_scheme(Scheme::ExactOu)
        }
        SchemeArg::Euler => sim.with_scheme(Scheme::EulerMaruyama),
    })
}

fn simulate(a: &SimulateArgs, dir: &mut RunDir) -> Result<(), MarketError> {
    let m = load_model(&a.model.model)?;
    let sim = simulator(&m.realization, &a.path, a.measure, a.scheme)?;
    let paths = sim.paths(0..a.path.paths as u64);
    let (header, rows) = z_rows(&paths);
    dir.write_csv("z_paths.csv", &header, rows)?;
    dir.write_manifest("simulate", &sha256_hex(m.text.as_bytes()), Some(a.path.seed), args_json(a))
}

fn maturity_grid(y_max: f64, dy: f64) -> Result<Vec<f64>, MarketError> {
    if !(dy > 0.0 && y_max >= 0.0 && dy.is_finite() && y_max.is_finite()) {
        return Err(MarketError::Usage("--dy must be positive and --y-max nonnegative".into()));
    }
    let n = (y_max / dy).round() as usize;
    Ok((0..=n).map(|i| i as f64 * dy).collect())
}

fn reconstruct(a: &ReconstructArgs, dir: &mut RunDir) -> Result<(), MarketError> {
    let m = load_model(&a.model.model)?;
    let r = &m.realization;
    let z = state_or_origin(&a.z, r.dim(), "z")?;
    let ys = maturity_grid(a.y_max, a.dy)?;
    if a.spde {
        let bundle = PathSimulator::new(r, &z, a.horizon, a.dt, measure(a.measure), a.seed)?.path(0);
        let grid = simulate_spde_grid(r, &ys, &bundle)?;
        let fdr: Vec<_> = (0..=bundle.steps()).map(|k| reconstruct_curve(r, bundle.z(k), bundle.times[k], &ys)).collect();
        let error = grid.iter().zip(&fdr).map(|(g, f)| g.max_abs_diff(f)).fold(0.0, f64::max);
        let (h, rows) = curve_rows(&grid);
        dir.write_csv("spde_curves.csv", &h, rows)?;
        let (h, rows) = curve_rows(&fdr);
        dir.write_csv("fdr_curves.csv", &h, rows)?;
        dir.write_json("spde_error.json", &json!({ "max_abs_error": error, "steps": bundle.steps() }))?;
    } else {
        let snap = reconstruct_curve(r, &z, a.t, &ys);
        let (h, rows) = curve_rows(std::slice::from_ref(&snap));
        dir.write_csv("curve.csv", &h, rows)?;
    }
    let seed = a.spde.then_some(a.seed);
    dir.write_manifest("reconstruct", &sha256_hex(m.text.as_bytes()), seed, args_json(a))
}

fn extract(a: &ExtractArgs, dir: &mut RunDir) -> Result<(), MarketError> {
    let m = load_model(&a.model.model)?;
    let text = fs::read_to_string(&a.quotes).map_err(|e| MarketError::Io(format!("{}: {e}", a.quotes.display())))?;
    let quotes = ingest_quotes(&text, a.t)?;
    let z = extract_state(&m.realization, &quotes.quotes, quotes.t)?;
    let out = json!({ "t": quotes.t, "quotes": quotes.quotes, "z": z });
    dir.write_json("state.json", &out)?;
    print!("{}", crate::output::to_json(&out));
    dir.write_manifest("extract", &sha256_hex(m.text.as_bytes()), None, args_json(a))
}

fn parse_list(s: &str) -> Result<Vec<f64>, MarketError> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| MarketError::Usage(format!("`{v}` is not a number"))))
        .collect()
}

fn parse_strategy(s: &str, r: &Realization, model: &ModelSpecFile) -> Result<Strategy, MarketError> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "zero" => Ok(Strategy::ConstantGamma(vec![0.0; r.dim()])),
        "constant" => Ok(Strategy::ConstantGamma(parse_list(rest)?)),
        "rollover" => {
            let y: f64 = rest.parse().map_err(|_| MarketError::Usage(format!("bad rollover maturity `{rest}`")))?;
            if !(y >= 0.0) {
                return Err(MarketError::Usage("rollover maturity must be nonnegative".into()));
            }
            Ok(Strategy::Rollover(y))
        }
        "feedback" => {
            let (spec, vf) = load_solution(Path::new(rest))?;
            if &spec != model {
                return Err(MarketError::Usage("feedback solution was solved for a different model".into()));
            }
            Ok(Strategy::Feedback(Arc::new(vf)))
        }
        _ => Err(MarketError::Usage(format!("unknown strategy `{s}`"))),
    }
}

fn wealth(a: &WealthArgs, dir: &mut RunDir) -> Result<(), MarketError> {
    let m = load_model(&a.model.model)?;
    let r = &m.realization;
    let strategy = parse_strategy(&a.strategy, r, &m.spec)?;
    let sim = simulator(r, &a.path, MeasureArg::P, SchemeArg::Auto)?;
    let form = match a.form {
        FormArg::Reduced => WealthForm::Reduced,
        FormArg::Diffusion => WealthForm::Diffusion,
    };
    let paths: Vec<PathBundle> = sim.paths(0..a.path.paths as u64);
    let wealth = fdrcurve_core::simulate_wealth(r, &strategy, a.x0, m.spec.rate, &paths, form)?;
    let (h, rows) = wealth_rows(&paths, &wealth);
    dir.write_csv("wealth.csv", &h, rows)?;
    let adm = admissibility_estimate(r, &strategy, a.x0, m.spec.rate, &paths)?;
    let finals: Vec<f64> = wealth.iter().map(|x| *x.last().expect("nonempty")).collect();
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let se = if finals.len() > 1 {
        (finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    dir.write_json(
        "wealth_summary.json",
        &json!({
            "terminal_mean": mean,
            "terminal_se": se,
            "admissibility": {
                "premium_sq": adm.premium_sq,
                "premium_sq_se": adm.premium_sq_se,
                "quadratic": adm.quadratic,
                "quadratic_se": adm.quadratic_se,
                "doublings": adm.doublings.iter().map(|d| json!({
                    "paths": d.paths, "premium_sq": d.premium_sq, "quadratic": d.quadratic,
                })).collect::<Vec<_>>(),
                "max_path_share": adm.max_path_share,
                "finite": adm.finite,
                "stable": adm.stable,
            },
        }),
    )?;
    dir.write_manifest("wealth", &sha256_hex(m.text.as_bytes()), Some(a.path.seed), args_json(a))
}

pub fn parse_utility(s: &str) -> Result<Utility, MarketError> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let num = || rest.parse::<f64>().map_err(|_| MarketError::Usage(format!("bad utility parameter in `{s}`")));
    let u = match kind {
        "exp" | "exponential" => Utility::Exponential { rho: num()? },
        "power" => Utility::Power { gamma: num()? },
        "log" if rest.is_empty() => Utility::Log,
        _ => return Err(MarketError::Usage(format!("unknown utility `{s}`"))),
    };
    u.validate().map_err(|e| MarketError::Usage(e.to_string()))?;
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisJson {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl From<Axis> for AxisJson {
    fn from(a: Axis) -> Self {
        Self { min: a.min, max: a.max, n: a.n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridJson {
    pub x: AxisJson,
    pub z: Vec<AxisJson>,
    pub horizon: f64,
    pub time_steps: usize,
    pub snapshot_stride: usize,
}

impl GridJson {
    fn to_grid(&self) -> HjbGrid {
        let axis = |a: &AxisJson| Axis::new(a.min, a.max, a.n);
        HjbGrid {
            x: axis(&self.x),
            z: self.z.iter().map(axis).collect(),
            horizon: self.horizon,
            time_steps: self.time_steps,
            snapshot_stride: self.snapshot_stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelJson {
    pub t: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MertonJson {
    /// Interior relative error of V against `−exp(−ρ x e^{rτ} − ½|ψ|²τ)`.
    pub value_relative_error: f64,
    /// Interior error of `κᵀγ*` against `ψ e^{−rτ}/ρ`.
    pub exposure_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub utility: String,
    pub rate: f64,
    pub grid: GridJson,
    pub levels: Vec<LevelJson>,
    pub max_residual: f64,
    pub merton: Option<MertonJson>,
}

fn interior(n: usize) -> std::ops::RangeInclusive<usize> {
    let last = (n - 1) as f64;
    ((0.1 * last).ceil() as usize).max(1)..=((0.9 * last).floor() as usize).min(n - 2)
}

/// Closed-form comparison, available for exponential utility when `κ` is
/// constant with full column rank (every exposure is attainable, so the
/// problem reduces to the scalar Merton case).
pub fn merton_check(vf: &ValueFunction) -> Option<MertonJson> {
    let Utility::Exponential { rho } = vf.utility() else { return None };
    let r = vf.realization();
    let kappa = r.constant_kappa()?;
    if linalg::numerical_rank(kappa, 1e-10) < kappa.ncols() {
        return None;
    }
    let psi = r.psi();
    let psi2: f64 = psi.iter().map(|p| p * p).sum();
    let g = vf.grid();
    let (d, nx) = (vf.dim(), g.x.n);
    let rate = vf.rate();
    let (mut value_err, mut exposure_err) = (0.0f64, 0.0f64);
    for level in vf.levels() {
        let tau = g.horizon - level.t;
        for s in 0..g.slices() {
            let mut rest = s;
            let mut inside = true;
            for j in (0..d).rev() {
                inside &= interior(g.z[j].n).contains(&(rest % g.z[j].n));
                rest /= g.z[j].n;
            }
            if !inside {
                continue;
            }
            for i in interior(nx) {
                let q = s * nx + i;
                let x = g.x.node(i);
                let exact = -(-rho * x * (rate * tau).exp() - 0.5 * psi2 * tau).exp();
                value_err = value_err.max(((level.values[q] - exact) / exact).abs());
                for (j, p) in psi.iter().enumerate() {
                    let e: f64 = (0..d).map(|k| level.policy[q * d + k] * kappa[(k, j)]).sum();
                    exposure_err = exposure_err.max((e - p * (-rate * tau).exp() / rho).abs());
                }
            }
        }
    }
    Some(MertonJson { value_relative_error: value_err, exposure_error: exposure_err })
}

fn solve(a: &SolveArgs, dir: &mut RunDir) -> Result<(), MarketError> {
    let m = load_model(&a.model.model)?;
    let r = &m.realization;
    let utility = parse_utility(&a.utility)?;
    let z0 = state_or_origin(&a.z0, r.dim(), "z0")?;
    let grid = HjbGrid {
        x: Axis::new(a.x_min, a.x_max, a.nx),
        z: gaussian_z_axes(r, &z0, a.horizon, a.nz, a.width),
        horizon: a.horizon,
        time_steps: a.steps,
        snapshot_stride: a.stride,
    };
    let vf = solve_hjb(r, utility, &grid, m.spec.rate)?;
    write_solution(dir, &m, &a.utility, &vf)?;
    dir.write_manifest("solve", &sha256_hex(m.text.as_bytes()), None, args_json(a))
}

fn write_solution(dir: &mut RunDir, m: &LoadedModel, utility: &str, vf: &ValueFunction) -> Result<(), MarketError> {
    let g = vf.grid();
    let d = vf.dim();
    let nx = g.x.n;
    let mut header: Vec<String> = vec!["t".into(), "x".into()];
    header.extend((1..=d).map(|i| format!("z{i}")));
    header.extend(["value".to_string(), "vt".to_string()]);
    header.extend((1..=d).map(|i| format!("gamma{i}")));
    let rows = vf.levels().iter().flat_map(|level| {
        (0..g.nodes()).map(move |q| {
            let (s, i) = (q / nx, q % nx);
            let mut row = vec![level.t, g.x.node(i)];
            let mut rest = s;
            let mut zs = vec![0.0; d];
            for j in (0..d).rev() {
                zs[j] = g.z[j].node(rest % g.z[j].n);
                rest /= g.z[j].n;
            }
            row.extend(zs);
            row.push(level.values[q]);
            row.push(level.vt[q]);
            row.extend_from_slice(&level.policy[q * d..(q + 1) * d]);
            row
        })
    });
    dir.write_csv("levels.csv", &header, rows)?;
    let summary = SolveSummary {
        utility: utility.to_string(),
        rate: vf.rate(),
        grid: GridJson {
            x: g.x.into(),
            z: g.z.iter().map(|a| (*a).into()).collect(),
            horizon: g.horizon,
            time_steps: g.time_steps,
            snapshot_stride: g.snapshot_stride,
        },
        levels: vf.levels().iter().map(|l| LevelJson { t: l.t, residual: l.residual }).collect(),
        max_residual: vf.summary().max_residual,
        merton: merton_check(vf),
    };
    dir.write_json("summary.json", &summary)?;
    dir.write_text("model.json", &m.spec.to_json())
}

/// Reads a `solve` run directory back into a value function.
pub fn load_solution(dir: &Path) -> Result<(ModelSpecFile, ValueFunction), MarketError> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| MarketError::Io(format!("{}: {e}", p.display())))
    };
    let spec = parse_model(&read("model.json")?)?;
    let r = spec.realization()?;
    let summary: SolveSummary = serde_json::from_str(&read("summary.json")?)
        .map_err(|e| MarketError::Parse { context: "summary.json".into(), message: e.to_string() })?;
    let utility = parse_utility(&summary.utility)?;
    let grid = summary.grid.to_grid();
    let (d, nodes) = (r.dim(), grid.nodes());

    let p = dir.join("levels.csv");
    let mut reader = csv::Reader::from_path(&p).map_err(|e| MarketError::Io(format!("{}: {e}", p.display())))?;
    let width = 2 + d + 2 + d;
    let mut levels: Vec<Level> = Vec::with_capacity(summary.levels.len());
    let mut current: Option<Level> = None;
    for (line, rec) in reader.records().enumerate() {
        let ctx = || format!("levels.csv line {}", line + 2);
        let rec = rec.map_err(|e| MarketError::Parse { context: ctx(), message: e.to_string() })?;
        if rec.len() != width {
            return Err(MarketError::Parse { context: ctx(), message: format!("expected {width} columns") });
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| MarketError::Parse { context: ctx(), message: format!("`{v}`") }))
            .collect::<Result<_, _>>()?;
        let level = current.get_or_insert_with(|| Level {
            t: vals[0],
            values: Vec::with_capacity(nodes),
            policy: Vec::with_capacity(nodes * d),
            vt: Vec::with_capacity(nodes),
            residual: 0.0,
        });
        level.values.push(vals[2 + d]);
        level.vt.push(vals[3 + d]);
        level.policy.extend_from_slice(&vals[4 + d..]);
        if level.values.len() == nodes {
            let mut done = current.take().expect("level in progress");
            done.residual = summary.levels.get(levels.len()).map(|l| l.residual).unwrap_or(0.0);
            levels.push(done);
        }
    }
    if current.is_some() || levels.len() != summary.levels.len() {
        return Err(MarketError::Parse { context: "levels.csv".into(), message: "incomplete level data".into() });
    }
    let vf = ValueFunction::from_levels(&r, utility, grid, summary.rate, levels)?;
    Ok((spec, vf))
}

fn verify(a: &VerifyArgs, dir: &mut RunDir) -> Result<(), MarketError> {
    let (spec, vf) = load_solution(&a.solution)?;
    let vf = Arc::new(vf);
    let z0 = state_or_origin(&a.z0, vf.dim(), "z0")?;
    let perturbations = standard_perturbations(&vf, a.delta);
    let mc = McParams { x0: a.x0, z0, n_paths: a.paths, dt: a.dt, seed: a.seed };
    let rep = verify_candidate(&vf, &perturbations, &mc)?;
    let grid_tol = 1e-3 * rep.value_pde.abs();
    let zero_gap = rep.perturbations.iter().find(|p| p.label == "zero").map(|p| p.gap);
    let out = json!({
        "hjb_residual": rep.hjb_residual,
        "inequality_residual": rep.inequality_residual,
        "value_pde": rep.value_pde,
        "optimal": { "mean": rep.optimal.mean, "se": rep.optimal.se },
        "perturbations": rep.perturbations.iter().map(|p| json!({
            "label": p.label,
            "mean": p.expected_utility.mean,
            "se": p.expected_utility.se,
            "gap": p.gap.mean,
            "gap_se": p.gap.se,
        })).collect::<Vec<_>>(),
        "checks": {
            "grid_tolerance": grid_tol,
            "value_consistent": rep.value_consistent(3.0, 1e-3),
            "candidate_dominates": rep.candidate_dominates(3.0),
            "zero_strictly_worse": zero_gap.map(|g| g.mean > 3.0 * g.se),
        },
    });
    dir.write_json("verify.json", &out)?;
    print!("{}", crate::output::to_json(&out));
    let args = json!({
        "solution_model_sha256": sha256_hex(spec.to_json().as_bytes()),
        "x0": a.x0, "z0": mc.z0, "paths": a.paths, "dt": a.dt, "seed": a.seed, "delta": a.delta,
    });
    dir.write_manifest("verify", &sha256_hex(spec.to_json().as_bytes()), Some(a.seed), args)
}

fn spot(a: &SpotArgs, dir: &mut RunDir) -> Result<(), MarketError> {
    let m = load_model(&a.model.model)?;
    let z = state_or_origin(&a.z, m.realization.dim(), "z")?;
    let s = implied_spot(&m.realization, &z, &m.spec.seasonality(), a.t)?;
    let out = json!({ "t": a.t, "z": z, "spot": s });
    dir.write_json("spot.json", &out)?;
    print!("{}", crate::output::to_json(&out));
    dir.write_manifest("spot", &sha256_hex(m.text.as_bytes()), None, args_json(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utility_strings() {
        assert_eq!(parse_utility("exp:2").unwrap(), Utility::Exponential { rho: 2.0 });
        assert_eq!(parse_utility("log").unwrap(), Utility::Log);
        assert!(parse_utility("power:1.5").is_err());
        assert!(parse_utility("cara").is_err());
    }

    #[test]
    fn interior_band() {
        assert_eq!(interior(101), 10..=90);
        assert_eq!(interior(5), 1..=3);
    }
}
