//! `ralp` command-line front-end.

mod commands;
mod failure;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::Failure;

#[derive(Parser)]
#[command(name = "ralp", version, about = "Regularized approximate linear programming for MDP value functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the RALP at one budget.
    Solve(SolveArgs),
    /// Trace the optimal objective over budgets from 0 to --psi-max.
    Path(PathArgs),
    /// Choose the budget minimizing the error bound.
    Select(SelectArgs),
    /// Run a benchmark and write CSV tables and SVG plots.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Full,
    Sampled,
    Estimated,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Solver {
    Homotopy,
    Simplex,
}

#[derive(Args)]
pub struct ProblemArgs {
    /// Sample file; required in the sampled and estimated modes.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Feature basis file; required unless --lp is given.
    #[arg(long)]
    pub basis: Option<PathBuf>,
    /// Program in the LP interchange format, instead of samples and a basis.
    #[arg(long, conflicts_with_all = ["samples", "basis", "weights", "chain", "chain_config"])]
    pub lp: Option<PathBuf>,
    /// Objective weights, one per sampled state in order of first
    /// appearance; normalized to sum to 1. Uniform when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "estimated")]
    pub mode: Mode,
    /// Discount for the sampled modes; full mode uses the chain's.
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    /// Use the 200-state chain as the model (full mode) and as the source of
    /// exact values (select).
    #[arg(long)]
    pub chain: bool,
    /// Chain settings replacing the bundled ones; implies --chain.
    #[arg(long)]
    pub chain_config: Option<PathBuf>,
}

#[derive(Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub psi: f64,
    #[arg(long, value_enum, default_value = "homotopy")]
    pub solver: Solver,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub psi_max: f64,
    /// Breakpoint CSV. Weights per breakpoint go to a sidecar with a
    /// .weights.csv suffix and a plot to one with an .svg extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Error model constants (TOML).
    #[arg(long)]
    pub error_model: PathBuf,
    #[arg(long, default_value_t = 1e3)]
    pub psi_max: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
pub enum BenchCommand {
    /// Sampled 200-state chain: true error and objective along the path.
    Chain(ChainBench),
    /// Kernel RALP on the inverted pendulum: balance steps against training episodes.
    Pendulum(PendulumBench),
    /// Hinge RALP on mountain car: one path trace against repeated simplex solves.
    Mountaincar(MountainCarBench),
}

#[derive(Args)]
pub struct ChainBench {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hinge features, evenly spaced over the chain.
    #[arg(long, default_value_t = 50)]
    pub features: usize,
    /// Slope of the sampling error used to select ψ.
    #[arg(long, default_value_t = 0.05)]
    pub error_slope: f64,
    #[arg(long)]
    pub chain_config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PendulumBench {
    /// Largest number of training episodes.
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Number of training sizes, evenly spaced up to --episodes.
    #[arg(long, default_value_t = 5)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Kernel centers.
    #[arg(long, default_value_t = 650)]
    pub features: usize,
    #[arg(long, default_value_t = 1.4)]
    pub psi: f64,
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    #[arg(long, default_value_t = ralp::policy::DEFAULT_LOOKAHEAD)]
    pub lookahead: usize,
    /// Pendulum constants replacing the bundled ones.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct MountainCarBench {
    /// Sample from random-policy episodes instead of uniform states.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Uniform samples when --episodes is not given.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hinges per state dimension.
    #[arg(long, default_value_t = 100)]
    pub features: usize,
    #[arg(long, default_value_t = 100.0)]
    pub psi_max: f64,
    /// Budgets solved independently with the simplex method.
    #[arg(long, default_value_t = 10)]
    pub solves: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Path(a) => commands::path(&a),
        Command::Select(a) => commands::select(&a),
        Command::Bench(BenchCommand::Chain(a)) => commands::bench_chain(&a),
        Command::Bench(BenchCommand::Pendulum(a)) => commands::bench_pendulum(&a),
        Command::Bench(BenchCommand::Mountaincar(a)) => commands::bench_mountain_car(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ralp: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
