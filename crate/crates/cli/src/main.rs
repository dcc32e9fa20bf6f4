//! `pumpsched`: simulate, optimize and batch-run pump schedules.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Errors surfaced to the shell, each with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("cannot write `{path}`: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{failed} of {total} scenarios did not reach the gap target")]
    PartialBatch { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Output { .. } => 1,
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::PartialBatch { .. } => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "pumpsched", version, about = "Optimal pump scheduling for water distribution networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a pump schedule (flat schedule by default) over the horizon.
    Simulate {
        #[command(flatten)]
        network: NetworkArgs,
        /// Schedule JSON (`{"groups": {id: {"n_active": [..], "speed": [..]}}}`).
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run the full pipeline: baseline, linearize, build, solve, re-simulate.
    Optimize {
        #[command(flatten)]
        network: NetworkArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Also write the MILP in MPS format to this path.
        #[arg(long)]
        export_mps: Option<PathBuf>,
        /// Stop after building (and exporting) the MILP.
        #[arg(long, requires = "export_mps")]
        export_only: bool,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Optimize every scenario of a parameter grid.
    Batch {
        #[command(flatten)]
        network: NetworkArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Grid specification JSON; the canonical 3x3x3x3 grid if omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Check a solution against a problem, independently of any solver.
    Validate {
        /// Problem file, MPS (`.mps`) or the internal JSON form.
        #[arg(long)]
        problem: PathBuf,
        /// Solution JSON as written by `optimize`.
        #[arg(long)]
        solution: PathBuf,
        /// Where to write the residual report (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the MILP and write it in MPS format without solving.
    ExportMps {
        #[command(flatten)]
        network: NetworkArgs,
        #[arg(long, default_value = "problem.mps")]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
pub struct NetworkArgs {
    /// Network JSON; the built-in canonical network if omitted.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Keep only the first K steps of the horizon.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Perturb every demand value by an independent seeded factor.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative amplitude of the `--seed` perturbation.
    #[arg(long, default_value_t = 0.1, requires = "seed")]
    pub perturbation: f64,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Engine {
    /// HiGHS branch-and-cut.
    Highs,
    /// Embedded branch-and-bound, LP engine chosen by size.
    Bnb,
    /// Embedded branch-and-bound on the dense simplex.
    BnbDense,
}

#[derive(Args, Clone)]
pub struct SolverArgs {
    /// Relative MIP gap target.
    #[arg(long, default_value_t = 0.05)]
    pub gap: f64,
    /// Wall-clock limit per solve, seconds.
    #[arg(long, default_value_t = 300.0)]
    pub time_limit: f64,
    #[arg(long, value_enum, default_value_t = Engine::Highs)]
    pub engine: Engine,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { network, schedule, out_dir } => commands::simulate(&network, schedule.as_deref(), &out_dir),
        Command::Optimize { network, solver, export_mps, export_only, out_dir } => {
            commands::optimize(&network, &solver, export_mps.as_deref(), export_only, &out_dir)
        }
        Command::Batch { network, solver, spec, jobs, out_dir } => {
            commands::batch(&network, &solver, spec.as_deref(), jobs, &out_dir)
        }
        Command::Validate { problem, solution, out } => commands::validate(&problem, &solution, out.as_deref()),
        Command::ExportMps { network, out } => commands::export_mps(&network, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
