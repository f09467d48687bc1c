//! The `sbp` command line: fibering reports, extremal search, solves,
//! sweeps and the verification suite.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical or
//! I/O failure, 3 verification failure.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sbp_core::error::Error;
use sbp_core::extremal::{estimate_extremals, ExtremalEstimate, ScanPoint};
use sbp_core::fibering::{classify_fiber, fiber_coeffs, FiberCoeffs, FiberingReport};
use sbp_core::grid::{make_grid, RadialGrid};
use sbp_core::profiles::{random_profile, trial_profile, ProfileRanges, TrialFamily};
use sbp_core::solve::{continue_branch, find_minimizer, mountain_pass, RecordSummary, SolutionBranch};
use sbp_core::verify::{run_suite, CheckStatus};

use config::{GridSpec, Overrides, RunConfig};
use output::{fmt_f64, fmt_opt, json_bytes, profile_csv, Manifest, OutputSet};

/// `println!` that ignores a closed stdout, e.g. when piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

pub const SWEEP_HEADER: [&str; 9] =
    ["q", "J_min", "J_mp", "res_min", "res_mp", "nehari_min", "nehari_mp", "jhat", "flags"];

#[derive(Debug, Parser)]
#[command(name = "sbp", version, about = "Radial Schrödinger–Bopp–Podolsky toolkit")]
pub struct Cli {
    /// TOML run configuration; flags below override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Nonlinearity exponent, in (2, 3].
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Bopp–Podolsky length (0 gives the Coulomb case).
    #[arg(long, global = true)]
    pub a: Option<f64>,
    /// Frequency in the `H^1` norm.
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    /// Seed for random profiles.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0: one per core, 1: sequential).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify the fiber map of a coefficient triple or a profile.
    Fiber(FiberArgs),
    /// Estimate lower bounds for the extremal charges.
    Extremal,
    /// Compute the minimiser and mountain-pass solutions at one charge.
    Solve(SolveArgs),
    /// Sweep the charge range of the configuration.
    Sweep,
    /// Run the invariant suite.
    Verify,
}

#[derive(Debug, Args)]
pub struct FiberArgs {
    #[arg(long)]
    pub q: f64,
    /// Fiber coefficients `A,B,P`.
    #[arg(long, value_delimiter = ',', num_args = 1, required_unless_present = "profile", conflicts_with = "profile")]
    pub coeffs: Option<Vec<f64>>,
    /// `gaussian:ALPHA`, `exponential:ALPHA` or `random:INDEX`, sampled on the grid.
    #[arg(long)]
    pub profile: Option<String>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub q: f64,
    /// Read `--q` as a multiple of the zero-energy estimate `q0*`.
    #[arg(long)]
    pub relative: bool,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Verification(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Numerical(_) => 2,
            Self::Verification(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Numerical(m) | Self::Verification(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Self::Usage(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Numerical(format!("output: {e}"))
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    let overrides = Overrides { p: cli.p, a: cli.a, omega: cli.omega, seed: cli.seed, jobs: cli.jobs, out: cli.out };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides).map_err(Failure::Usage)?;
    if cfg.jobs > 0 {
        // The global pool can be set once per process; later calls keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global();
    }
    match &cli.command {
        Command::Fiber(args) => cmd_fiber(&cfg, args),
        Command::Extremal => cmd_extremal(&cfg),
        Command::Solve(args) => cmd_solve(&cfg, args),
        Command::Sweep => cmd_sweep(&cfg),
        Command::Verify => cmd_verify(&cfg),
    }
}

fn grid_of(spec: &GridSpec) -> Result<Arc<RadialGrid>, Failure> {
    Ok(make_grid(spec.r_max, spec.n, spec.scheme)?)
}

fn manifest(cfg: &RunConfig, command: &str, started: Instant, notes: Vec<String>) -> Manifest {
    Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg.to_toml(),
        outputs: Vec::new(),
        notes,
        wall_time_s: started.elapsed().as_secs_f64(),
    }
}

fn profile_coeffs(cfg: &RunConfig, spec: &str) -> Result<FiberCoeffs, Failure> {
    let bad =
        || Failure::Usage(format!("bad profile `{spec}`; expected gaussian:ALPHA, exponential:ALPHA or random:INDEX"));
    let (kind, arg) = spec.split_once(':').ok_or_else(bad)?;
    let grid = grid_of(&cfg.grid)?;
    let u = match kind {
        "gaussian" | "exponential" => {
            let alpha: f64 = arg.parse().map_err(|_| bad())?;
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(bad());
            }
            let family = if kind == "gaussian" { TrialFamily::Gaussian } else { TrialFamily::Exponential };
            trial_profile(&grid, family, alpha)
        }
        "random" => {
            let index: u64 = arg.parse().map_err(|_| bad())?;
            random_profile(cfg.seed, index, &ProfileRanges::default()).sample(&grid)
        }
        _ => return Err(bad()),
    };
    Ok(fiber_coeffs(&u, &cfg.params)?)
}

#[derive(Serialize)]
struct FiberOutput<'a> {
    coeffs: &'a FiberCoeffs,
    report: &'a FiberingReport,
}

fn cmd_fiber(cfg: &RunConfig, args: &FiberArgs) -> Result<(), Failure> {
    let c = match (&args.coeffs, &args.profile) {
        (Some(v), _) => {
            let [a, b, p] = v[..] else {
                return Err(Failure::Usage(format!("--coeffs needs three values A,B,P, got {}", v.len())));
            };
            FiberCoeffs::new(a, b, p, cfg.params.p)?
        }
        (None, Some(spec)) => profile_coeffs(cfg, spec)?,
        (None, None) => return Err(Failure::Usage("need --coeffs or --profile".into())),
    };
    let rep = classify_fiber(&c, args.q)?;
    let case = serde_json::to_value(rep.case).expect("case serialises");
    say!("fiber case {} at q = {}", case.as_str().unwrap_or_default(), fmt_f64(rep.q));
    for (name, t) in [("t_minus", rep.t_minus), ("t_plus", rep.t_plus), ("t_inflect", rep.t_inflect)] {
        if let Some(t) = t {
            say!("  {name} = {}", fmt_f64(t));
        }
    }
    say!("  q(u) = {} at t(u) = {}", fmt_f64(rep.q_of_u), fmt_f64(rep.t_of_u));
    say!("  q0(u) = {} at t0(u) = {}", fmt_f64(rep.q0_of_u), fmt_f64(rep.t0_of_u));
    let block = json_bytes(&FiberOutput { coeffs: &c, report: &rep });
    let _ = std::io::stdout().lock().write_all(&block);
    Ok(())
}

fn extremal(cfg: &RunConfig, grid: &Arc<RadialGrid>) -> Result<ExtremalEstimate, Failure> {
    let est = estimate_extremals(grid, &cfg.params, &cfg.search_config())?;
    eprintln!(
        "extremal: q*_lb = {}, q0*_lb = {} ({})",
        fmt_f64(est.q_star_lb),
        fmt_f64(est.q0_star_lb),
        est.family_tag
    );
    Ok(est)
}

#[derive(Serialize)]
struct ExtremalOutput<'a> {
    params: &'a sbp_core::params::ProblemParams,
    grid: &'a GridSpec,
    summary: sbp_core::extremal::ExtremalSummary,
    scan: &'a [ScanPoint],
}

fn cmd_extremal(cfg: &RunConfig) -> Result<(), Failure> {
    let started = Instant::now();
    let grid = grid_of(&cfg.grid)?;
    let est = extremal(cfg, &grid)?;
    let mut files = OutputSet::new(&cfg.out);
    let doc = ExtremalOutput { params: &cfg.params, grid: &cfg.grid, summary: est.summary(), scan: &est.scan };
    files.write("extremal.json", &json_bytes(&doc))?;
    files.write("maximizer.csv", &profile_csv(grid.radii(), &[("u", est.maximizer.vals())]))?;
    files.finish(manifest(cfg, "extremal", started, Vec::new()))?;
    say!("q_star_lb = {}", fmt_f64(est.q_star_lb));
    say!("q0_star_lb = {}", fmt_f64(est.q0_star_lb));
    say!("maximizer: {}", est.family_tag);
    Ok(())
}

#[derive(Serialize)]
struct SolveOutput {
    q: f64,
    q_star_lb: f64,
    q0_star_lb: f64,
    minimizer: RecordSummary,
    mountain_pass: Option<RecordSummary>,
    mountain_pass_error: Option<String>,
}

fn cmd_solve(cfg: &RunConfig, args: &SolveArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let grid = grid_of(&cfg.grid)?;
    let est = extremal(cfg, &grid)?;
    let q = if args.relative { args.q * est.q0_star_lb } else { args.q };
    let opts = cfg.solver.options(&est.embedding);
    let min = find_minimizer(q, &cfg.params, &est.maximizer, &opts).map_err(|e| match Failure::from(e) {
        Failure::Numerical(m) => Failure::Numerical(format!("minimizer at q = {}: {m}", fmt_f64(q))),
        other => other,
    })?;
    let mp = mountain_pass(q, &cfg.params, &min, &opts);

    let zeros = vec![0.0; grid.len()];
    let w_vals = mp.as_ref().map(|w| w.u.vals()).unwrap_or(&zeros);
    let doc = SolveOutput {
        q,
        q_star_lb: est.q_star_lb,
        q0_star_lb: est.q0_star_lb,
        minimizer: min.summary(),
        mountain_pass: mp.as_ref().ok().map(|w| w.summary()),
        mountain_pass_error: mp.as_ref().err().map(|e| e.to_string()),
    };
    let mut files = OutputSet::new(&cfg.out);
    files.write("solve.json", &json_bytes(&doc))?;
    files.write("solve_profiles.csv", &profile_csv(grid.radii(), &[("u_min", min.u.vals()), ("w_mp", w_vals)]))?;
    files.finish(manifest(cfg, "solve", started, Vec::new()))?;

    say!("q = {}", fmt_f64(q));
    say!(
        "minimizer: {} energy = {} residual = {} nehari = {}",
        min.kind,
        fmt_f64(min.energy),
        fmt_f64(min.residual_norm),
        min.nehari
    );
    match mp {
        Ok(w) => {
            say!(
                "mountain pass: energy = {} residual = {} nehari = {}",
                fmt_f64(w.energy),
                fmt_f64(w.residual_norm),
                w.nehari
            );
            Ok(())
        }
        Err(e) => Err(Failure::Numerical(format!("mountain pass at q = {}: {e}", fmt_f64(q)))),
    }
}

/// The sweep table, one row per charge.
pub fn sweep_csv(branch: &SolutionBranch) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER).expect("in-memory write");
    for cell in &branch.cells {
        let m = cell.minimizer.as_ref();
        let p = cell.mountain_pass.as_ref();
        let flags = if cell.flags.is_empty() { "ok".to_string() } else { cell.flags.join(";") };
        w.write_record([
            fmt_f64(cell.q),
            fmt_opt(m.map(|r| r.energy)),
            fmt_opt(p.map(|r| r.energy)),
            fmt_opt(m.map(|r| r.residual_norm)),
            fmt_opt(p.map(|r| r.residual_norm)),
            m.map(|r| r.nehari.to_string()).unwrap_or_default(),
            p.map(|r| r.nehari.to_string()).unwrap_or_default(),
            fmt_opt(cell.jhat),
            flags,
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn cmd_sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let started = Instant::now();
    let grid = grid_of(&cfg.grid)?;
    let est = extremal(cfg, &grid)?;
    let (q_lo, q_hi) = cfg.sweep.range(est.q0_star_lb);
    let opts = cfg.solver.options(&est.embedding);
    let branch = continue_branch(
        q_lo,
        q_hi,
        cfg.sweep.steps,
        &cfg.params,
        &est.maximizer,
        &opts,
        &cfg.sweep.options(),
        cfg.execution(),
    )?;
    let mut notes =
        vec![format!("q_star_lb = {}", fmt_f64(est.q_star_lb)), format!("q0_star_lb = {}", fmt_f64(est.q0_star_lb))];
    for cell in &branch.cells {
        notes.extend(cell.errors.iter().map(|e| format!("q = {}: {e}", fmt_f64(cell.q))));
    }
    let table = sweep_csv(&branch);
    let mut files = OutputSet::new(&cfg.out);
    files.write("sweep.csv", &table)?;
    files.finish(manifest(cfg, "sweep", started, notes))?;
    let _ = std::io::stdout().lock().write_all(&table);
    Ok(())
}

fn cmd_verify(cfg: &RunConfig) -> Result<(), Failure> {
    let started = Instant::now();
    let grid = grid_of(&cfg.grid)?;
    let report = run_suite(&grid, &cfg.params, &cfg.verify_config())?;
    let mut files = OutputSet::new(&cfg.out);
    files.write("verify.json", &json_bytes(&report))?;
    files.finish(manifest(cfg, "verify", started, Vec::new()))?;
    for c in &report.checks {
        let status = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::NotApplicable => "n/a",
        };
        say!("{status:4} {:24} worst slack {} over {} samples", c.name, fmt_f64(c.worst_slack), c.samples);
    }
    if report.all_pass() {
        Ok(())
    } else {
        let failed: Vec<&str> =
            report.checks.iter().filter(|c| c.status == CheckStatus::Fail).map(|c| c.name.as_str()).collect();
        Err(Failure::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}
