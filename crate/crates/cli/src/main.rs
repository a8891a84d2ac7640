//! `hlctdp`: generate instances, build and export models, preprocess, solve,
//! validate and report.
//!
//! Exit codes: 0 success, 2 validation failure, 3 size refusal, 4 input
//! error, 1 anything else.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hlctdp::formulations::Formulation;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "hlctdp",
    version,
    about = "Hub location with congestion and time-sensitive demand"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate benchmark instances from CAB-style data.
    Generate(GenerateArgs),
    /// Build the F1 or F2 model of an instance and export it as MPS.
    Build(BuildArgs),
    /// Solve an instance with the exact branch-and-bound.
    Solve(SolveArgs),
    /// Solve a tiny instance by full enumeration.
    Oracle(OracleArgs),
    /// Check a solution file against an instance.
    Validate(ValidateArgs),
    /// Aggregate preprocessing and result tables over a sweep directory.
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
pub struct GenerateArgs {
    /// Whitespace-separated CAB data: distances then flows.
    #[arg(long, required_unless_present = "synthetic")]
    pub cab: Option<PathBuf>,
    /// Per-city hub setup cost bases.
    #[arg(long, required_unless_present = "synthetic")]
    pub costs: Option<PathBuf>,
    /// Use a seeded synthetic CAB-like data set with this many cities.
    #[arg(long, conflicts_with_all = ["cab", "costs"])]
    pub synthetic: Option<usize>,
    /// Generator parameters as JSON; missing fields take the defaults.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Level multipliers as JSON.
    #[arg(long)]
    pub deltas: Option<PathBuf>,
    /// Emit the full alpha x n x L x R grid.
    #[arg(long)]
    pub sweep: bool,
    /// Sizes of the sweep.
    #[arg(long, value_delimiter = ',', default_values_t = hlctdp::generator::DESK_SIZES)]
    pub sizes: Vec<usize>,
    /// Discount factors of the sweep.
    #[arg(long, value_delimiter = ',', default_values_t = hlctdp::generator::SWEEP_ALPHAS)]
    pub alphas: Vec<f64>,
    #[arg(long, required_unless_present = "sweep")]
    pub n: Option<usize>,
    #[arg(long, required_unless_present = "sweep")]
    pub alpha: Option<f64>,
    /// Number of service levels (1 or 2).
    #[arg(long, default_value_t = 1)]
    pub levels: usize,
    /// Number of demand levels (1 to 3).
    #[arg(long, default_value_t = 1)]
    pub demand_levels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    F1,
    F2,
}

impl From<Which> for Formulation {
    fn from(w: Which) -> Self {
        match w {
            Which::F1 => Formulation::F1,
            Which::F2 => Formulation::F2,
        }
    }
}

#[derive(Args, Serialize)]
pub struct ModelFlags {
    #[arg(long, value_enum, default_value = "f2")]
    pub formulation: Which,
    /// Drop the origin/destination consistency constraints.
    #[arg(long)]
    pub no_consistency: bool,
    /// Add the transit-time valid inequality.
    #[arg(long)]
    pub valid_ineq: bool,
}

#[derive(Args, Serialize)]
pub struct BuildArgs {
    #[arg(long, short)]
    pub instance: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Apply the variable-fixing mask as zero upper bounds.
    #[arg(long)]
    pub preprocess: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum OnOff {
    On,
    Off,
}

#[derive(Args, Serialize)]
pub struct SolveArgs {
    #[arg(long, short)]
    pub instance: PathBuf,
    /// Seconds.
    #[arg(long, default_value_t = 7200.0)]
    pub time_limit: f64,
    /// Relative optimality tolerance.
    #[arg(long, default_value_t = 1e-5)]
    pub gap: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "on")]
    pub preprocess: OnOff,
    /// Heuristic cap on open hubs; results are then reported as feasible.
    #[arg(long)]
    pub max_hubs: Option<usize>,
    /// Instead of searching, read `<variable> <value>` lines written by an
    /// external MILP solver for the model selected by the model flags.
    #[arg(long)]
    pub import: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct OracleArgs {
    #[arg(long, short)]
    pub instance: PathBuf,
    /// Drop the origin/destination consistency rule.
    #[arg(long)]
    pub no_consistency: bool,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_configs: u64,
    #[arg(long, default_value_t = 10_000_000)]
    pub max_assignments: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long, short)]
    pub instance: PathBuf,
    #[arg(long, short)]
    pub solution: PathBuf,
    /// Skip the origin/destination consistency rule.
    #[arg(long)]
    pub no_consistency: bool,
}

#[derive(Args, Serialize)]
pub struct ReportArgs {
    /// Directory with sweep instance files.
    #[arg(long, short)]
    pub dir: PathBuf,
    /// Directory with `solve` outputs; defaults to `--dir`.
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Build(a) => commands::build(a),
        Command::Solve(a) => commands::solve(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Validate(a) => commands::validate(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
