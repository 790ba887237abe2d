//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{parse_config, parse_config_str, SimConfig};
use crate::diagnostics::{perturbation_experiment, tau_convergence_study, truncation_study};
use crate::error::Error;
use crate::materials::validate_hypothesis;
use crate::output::{verify_run, write_run, Failure};
use crate::stepper::{compute_c_r, run_partial};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "FREEZEBOX_THREADS";

#[derive(Debug, Parser)]
#[command(name = "freezebox", version, about = "Freezing water in an elastic container")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a configuration and write snapshots, ledgers, summary, and plots.
    Simulate {
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay the ledger and bound checks on a run directory.
    Verify { run_dir: PathBuf },
    /// Run one of the numerical studies.
    Study {
        kind: StudyKind,
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of halvings for the τ study; defaults to `diagnostics.tau_levels`.
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Check the material of a configuration against the structural hypotheses.
    MaterialCheck { config: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyKind {
    Tau,
    Perturb,
    Truncation,
}

/// Exit status for an error that aborted a command.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidInput(_) | Error::Json(_) | Error::RunDirectory { .. } | Error::Io(_) => {
            Failure::Config.exit_code()
        }
        Error::SizeMismatch { .. }
        | Error::TauTooLarge(_)
        | Error::Bracketing(_)
        | Error::NewtonDivergence { .. }
        | Error::NotPositiveDefinite { .. } => Failure::Solver.exit_code(),
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::config(THREADS_ENV, format!("expected a thread count, got `{v}`")))?;
    // A pool may already exist when called twice in one process; the first one wins.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn with_out(mut config: SimConfig, out: Option<PathBuf>) -> SimConfig {
    if let Some(o) = out {
        config.output.dir = o;
    }
    config
}

fn write_report<T: Serialize>(dir: &Path, name: &str, report: &T) -> Result<PathBuf, Error> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(report)?)?;
    Ok(path)
}

fn simulate(config: &Path, out: Option<PathBuf>) -> Result<i32, Error> {
    let config = with_out(parse_config(config)?, out);
    let problem = config.build()?;
    if problem.c_r_below_minimum() {
        eprintln!(
            "warning: c_R = {} is below the minimum {}; the lower temperature bound is not guaranteed",
            problem.c_r, problem.c_r_min
        );
    }
    let start = Instant::now();
    let (traj, err) = run_partial(&problem);
    let elapsed = start.elapsed();
    let dir = config.output_dir();
    let summary = write_run(&dir, &config, &problem, &traj, err.as_ref())?;
    if let Some(e) = &err {
        eprintln!("solver failure at step {}: {e}", traj.last().step + 1);
    }
    println!(
        "{} steps in {:.2}s -> {} ({})",
        summary.steps_completed,
        elapsed.as_secs_f64(),
        dir.display(),
        if summary.passed { "all checks passed".to_string() } else { format!("failed: {:?}", summary.failures) }
    );
    Ok(Failure::exit_status(&summary.failures))
}

fn verify(dir: &Path) -> Result<i32, Error> {
    let report = verify_run(dir)?;
    for m in &report.messages {
        eprintln!("{m}");
    }
    println!(
        "{} snapshots, {} ledger rows, max energy mismatch {:.3e}: {}",
        report.snapshots,
        report.ledger_rows,
        report.max_energy_mismatch,
        if report.passed() { "ok".to_string() } else { format!("failed: {:?}", report.failures) }
    );
    Ok(Failure::exit_status(&report.failures))
}

fn study(kind: StudyKind, config: &Path, out: Option<PathBuf>, levels: Option<usize>) -> Result<i32, Error> {
    let config = with_out(parse_config(config)?, out);
    let problem = config.build()?;
    let dir = config.output_dir();
    let passed = match kind {
        StudyKind::Tau => {
            let s = tau_convergence_study(&problem, levels.unwrap_or(config.diagnostics.tau_levels))?;
            for (tau, d) in s.taus.iter().zip(&s.distances) {
                println!("τ = {tau:.3e}  d = {d:.6e}");
            }
            println!("ratios {:?}", s.ratios);
            let path = write_report(&dir, "study_tau.json", &s)?;
            println!("report -> {}", path.display());
            s.passed
        }
        StudyKind::Perturb => {
            let s = perturbation_experiment(
                &problem,
                &config.diagnostics.deltas,
                config.diagnostics.perturb,
                config.seed,
            )?;
            for x in &s.samples {
                println!("δ = {:.1e}  Q = {:.6e}", x.delta, x.q);
            }
            println!("spread {:.4}", s.spread);
            let path = write_report(&dir, "study_perturb.json", &s)?;
            println!("report -> {}", path.display());
            s.passed
        }
        StudyKind::Truncation => {
            let s = truncation_study(&problem)?;
            println!(
                "R = {}  B(R) = {:.6}  max θ = {:.6}  sup gap = {:.3e}",
                s.r, s.cutoff, s.max_theta, s.sup_difference
            );
            let path = write_report(&dir, "study_truncation.json", &s)?;
            println!("report -> {}", path.display());
            s.passed
        }
    };
    Ok(if passed { 0 } else { Failure::Study.exit_code() })
}

#[derive(Serialize)]
struct MaterialCheck {
    validation: crate::materials::ValidationReport,
    r0: f64,
    r: f64,
    cutoff: f64,
    c_r: f64,
    c_r_min: f64,
}

fn material_check(path: &Path) -> Result<i32, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let config = parse_config_str(&text)?;
    let model = config.material_model()?;
    let report = validate_hypothesis(&model, 2001);
    for c in &report.clauses {
        println!("({:>3}) {}  {}", c.clause, if c.passed { "ok  " } else { "FAIL" }, c.detail);
    }
    println!("growth: {}", report.growth_heuristic.detail);
    let r = config.truncation.r;
    let family = model.truncate(r)?;
    let check = MaterialCheck {
        r0: model.r0(),
        r,
        cutoff: family.b(),
        c_r: compute_c_r(&family, &model),
        c_r_min: crate::stepper::c_r_minimum(&family, &model),
        validation: report,
    };
    println!(
        "R₀ = {:.6}  R = {}  B(R) = {:.6}  c_R = {:.6}  (minimum {:.6})",
        check.r0, check.r, check.cutoff, check.c_r, check.c_r_min
    );
    println!("material sha256 {}", model.fingerprint());
    Ok(if check.validation.passed() { 0 } else { Failure::Config.exit_code() })
}

/// Parses arguments, runs the command, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Failure::Config.exit_code() } else { 0 };
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Simulate { config, out } => simulate(&config, out),
        Command::Verify { run_dir } => verify(&run_dir),
        Command::Study { kind, config, out, levels } => study(kind, &config, out, levels),
        Command::MaterialCheck { config } => material_check(&config),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    }
}
