//! Command-line front end: dataset simulation, two-stage training,
//! refinement, the RFF-ARX baseline and multi-horizon evaluation.
//!
//! [`run`] takes the full argument vector and returns the process exit
//! code: 0 on success, 1 on a usage error, 2 on a data or model error.

mod commands;
mod config;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{reference_lds, SavedModel};
pub use config::{parse_horizons, Config};
pub use report::{dataset_hash, EvalReport, ReportRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] rffpsr::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Model(_) => 2,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "rffpsr", version, about = "Learn and evaluate RFF-PSR models of controlled dynamical systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset and write it as a manifest plus per-trajectory CSVs.
    Simulate(SimulateArgs),
    /// Learn an RFF-PSR by two-stage regression.
    Train(TrainArgs),
    /// Refine a learned RFF-PSR by backpropagation through time.
    Refine(RefineArgs),
    /// Evaluate saved models on the test split.
    Eval(EvalArgs),
    /// Train the RFF-ARX baseline.
    Arx(TrainArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SystemArg {
    Benchmark,
    Lds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum S1Arg {
    Joint,
    Cond,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub system: Option<SystemArg>,
    #[arg(long = "n-traj")]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Learning hyperparameters shared by `train` and `arx`.
#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub history: Option<usize>,
    /// Random Fourier frequencies per feature map.
    #[arg(long)]
    pub rff: Option<usize>,
    /// Projected feature dimension.
    #[arg(long)]
    pub pca: Option<usize>,
    #[arg(long, value_enum)]
    pub s1: Option<S1Arg>,
    /// Searched on the validation split when omitted. For `arx` this is
    /// the ridge regularizer.
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch CSV log; defaults to `<out>.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long = "max-epochs")]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Saved model; repeat to compare several.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Horizons as `1..10`, `1,3,5` or `4`.
    #[arg(long, value_parser = parse_horizons)]
    pub horizons: Option<::std::vec::Vec<usize>>,
    /// Target times before this step are excluded; defaults to the
    /// largest model history length.
    #[arg(long)]
    pub history: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Refine(a) => commands::refine(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Arx(a) => commands::arx(&a),
    }
}
