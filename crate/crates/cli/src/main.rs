//! `gfdeconv`: simulation, deconvolution, system solving and Monte Carlo
//! studies from the command line.
//!
//! Exit codes: 0 success, 1 unknown command or usage error (also I/O
//! failures), 2 invalid configuration or data, 3 solver rejection,
//! 4 failed self-test.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::{ConfigError, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "gfdeconv",
    version,
    about = "Deconvolution in spaces of generalized functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sample size.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Grid points per axis.
    #[arg(long = "grid-N", global = true)]
    grid_n: Option<usize>,
    /// Grid half-width.
    #[arg(long = "grid-L", global = true)]
    grid_l: Option<f64>,
    /// Monte Carlo replications.
    #[arg(long, global = true)]
    reps: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Draw a dataset.
    Simulate,
    /// Deconvolve with a known error characteristic function.
    Deconvolve,
    /// Estimate the regression function and the error law jointly.
    SolveSystem,
    /// Continuity for ordinary-smooth error, divergence for supersmooth error.
    WellposedDemo,
    /// Median weak distances over a sample-size ladder.
    ConvergenceStudy,
    /// Run the invariant suite.
    Selftest,
}

const EXIT_USAGE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_REJECTED: u8 = 3;
const EXIT_SELFTEST: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_INVALID;
    }
    match err.downcast_ref::<gfdeconv::Error>() {
        Some(gfdeconv::Error::Rejected(_)) => EXIT_REJECTED,
        Some(gfdeconv::Error::InvalidArgument(_) | gfdeconv::Error::InvalidGrid(_) | gfdeconv::Error::GridMismatch) => {
            EXIT_INVALID
        }
        // malformed data files are input errors as well
        Some(gfdeconv::Error::Csv(_) | gfdeconv::Error::Json(_)) => EXIT_INVALID,
        _ => EXIT_USAGE,
    }
}

fn configure_threads() {
    let Ok(raw) = std::env::var("GFDECONV_THREADS") else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring GFDECONV_THREADS={raw:?}: expected a positive integer"),
    }
}

fn execute(command: Command, common: &Common) -> anyhow::Result<(String, bool)> {
    if let Command::Selftest = command {
        std::fs::create_dir_all(&common.out)?;
        let (passed, checks) = run::selftest(&common.out)?;
        for c in &checks {
            println!("{} {:<32} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let failed = checks.iter().filter(|c| !c.passed).count();
        return Ok((format!("{} checks, {failed} failed", checks.len()), passed));
    }
    let overrides = Overrides {
        seed: common.seed,
        n: common.n,
        reps: common.reps,
        grid_n: common.grid_n,
        grid_l: common.grid_l,
    };
    let cfg = RunConfig::load(common.config.as_deref(), &overrides)?;
    let out: &Path = &common.out;
    std::fs::create_dir_all(out)?;
    let summary = match command {
        Command::Simulate => run::simulate(&cfg, out)?,
        Command::Deconvolve => run::deconvolve(&cfg, out)?,
        Command::SolveSystem => run::solve_system(&cfg, out)?,
        Command::WellposedDemo => run::wellposed(&cfg, out)?,
        Command::ConvergenceStudy => run::convergence_study(&cfg, out)?,
        Command::Selftest => unreachable!("handled above"),
    };
    Ok((summary, true))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::InvalidValue | ErrorKind::ValueValidation => EXIT_INVALID,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    match execute(cli.command, &cli.common) {
        Ok((summary, true)) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Ok((summary, false)) => {
            eprintln!("{summary}");
            ExitCode::from(EXIT_SELFTEST)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
