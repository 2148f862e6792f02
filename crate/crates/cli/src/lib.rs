//! Batch front end: parse a config, run one command, write `report.txt` and
//! CSV tables into the output directory.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{Family, FileConfig, Output, Overrides, PolicyChoice};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("refused: {0}")]
    Divergent(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Divergent(_) => 3,
        }
    }
}

impl From<riskstop_core::Error> for CliError {
    fn from(e: riskstop_core::Error) -> Self {
        use riskstop_core::Error as E;
        match e {
            E::MaxIterExceeded { .. } | E::BudgetExceeded { .. } | E::TailUndecidable | E::AnalyticUnavailable(_) => {
                CliError::Numeric(e.to_string())
            }
            E::DivergentTarget => CliError::Divergent(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "riskstop", version, about = "Risk-sensitive optimal stopping solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimal and maximal solutions by value iteration, plus the gap report.
    Solve(CommonArgs),
    /// Monte Carlo value of a stopping rule.
    Simulate(CommonArgs),
    /// Uniform-integrability profile and regime classification.
    Diagnose(CommonArgs),
    /// Reproduce a built-in example against its closed form.
    Example(CommonArgs),
    /// Dyadic finite-horizon values of the jump process.
    Dyadic(CommonArgs),
}

impl Command {
    fn parts(&self) -> (&'static str, &CommonArgs) {
        match self {
            Command::Solve(a) => ("solve", a),
            Command::Simulate(a) => ("simulate", a),
            Command::Diagnose(a) => ("diagnose", a),
            Command::Example(a) => ("example", a),
            Command::Dyadic(a) => ("dyadic", a),
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Model family; overrides the config file.
    #[arg(value_enum)]
    pub family: Option<Family>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub horizon_cap: Option<usize>,
    /// Comma-separated horizons.
    #[arg(long = "T-grid", value_delimiter = ',')]
    pub t_grid: Option<Vec<f64>>,
    /// Comma-separated dyadic refinement levels.
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<u32>>,
    /// Number of trajectories to dump to traces.csv.
    #[arg(long)]
    pub traces: Option<usize>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyChoice>,
    /// Comma-separated stopping set; replaces --policy.
    #[arg(long, value_delimiter = ',')]
    pub stop_on: Option<Vec<f64>>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            family: self.family,
            alpha: self.alpha,
            c: self.c,
            lambda: self.lambda,
            d: self.d,
            x0: self.x0,
            tol: self.tol,
            max_iter: self.max_iter,
            n_traj: self.n_traj,
            horizon_cap: self.horizon_cap,
            seed: self.seed,
            t_grid: self.t_grid.clone(),
            m: self.m.clone(),
            traces: self.traces,
            policy: self.policy,
            stop_on: self.stop_on.clone(),
        }
    }
}

/// Caps the rayon pool at `RISKSTOP_THREADS` workers when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("RISKSTOP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("RISKSTOP_THREADS must be a positive integer, got {v:?}")))?;
    // A pool built earlier in the same process is fine to keep.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs the command and returns the process exit code. Outputs are written
/// even when a numeric step fails after the report was assembled.
pub fn run(cli: &Cli) -> Result<u8, CliError> {
    init_threads()?;
    let (name, args) = cli.command.parts();
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let settings = config::resolve(name, &file, &args.overrides())?;
    let output = Output::from_section(&file.output, args.out.clone());
    let outcome = match name {
        "solve" => commands::solve(&settings)?,
        "simulate" => commands::simulate(&settings)?,
        "diagnose" => commands::diagnose(&settings)?,
        "example" => commands::example(&settings)?,
        _ => commands::dyadic(&settings)?,
    };
    report::emit(&output, &outcome.report, &outcome.tables)?;
    print!("{}", outcome.report.render());
    match outcome.numeric_failure {
        Some(why) => {
            eprintln!("riskstop: numeric failure: {why}");
            Ok(2)
        }
        None => Ok(0),
    }
}
