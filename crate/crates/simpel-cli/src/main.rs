//! Experiment CLI: score benchmarking, regression learning curves,
//! offline/episodic model-based RL, and checkpoint inspection.
//!
//! Exit codes: 0 success, 2 config/user error, 3 corrupt artifact,
//! 4 numerical failure.

mod config;
mod inspect;
mod regression;
mod rl;
mod score_bench;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "simpel", about = "Simulator-prior BNN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark the prior-score estimators on a sample file or a named
    /// synthetic density.
    ScoreBench(RunArgs),
    /// Regression learning curves over (method × train size × seed).
    Regression(RunArgs),
    /// Offline or episodic model-based RL.
    Rl(RunArgs),
    /// Print the contents of an ensemble checkpoint.
    Inspect {
        /// Checkpoint path.
        checkpoint: PathBuf,
    },
}

#[derive(Args, Clone)]
pub struct RunArgs {
    /// TOML config file (supports ${VAR} interpolation).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker-pool size (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Reuse completed rows found in the output file.
    #[arg(long)]
    pub resume: bool,
    /// Dotted-path config overrides, repeatable: --set key.path=value.
    #[arg(long = "set")]
    pub set: Vec<String>,
}

/// A classified failure carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 2: bad config, bad flags, missing input files.
    Config(String),
    /// Exit 3: corrupt artifact (bad magic, truncated, version mismatch).
    Artifact(String),
    /// Exit 4: numerical failure (divergence, singular matrices).
    Numerical(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Artifact(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Artifact(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<simpel::score::ScoreError> for Failure {
    fn from(e: simpel::score::ScoreError) -> Self {
        use simpel::score::ScoreError::*;
        match e {
            SingularCovariance { .. } | DegenerateGram | IterationDiverged { .. }
            | NonFinite(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<simpel::prior::PriorError> for Failure {
    fn from(e: simpel::prior::PriorError) -> Self {
        use simpel::prior::PriorError::*;
        match e {
            NotPositiveDefinite | RowRejected { .. } => Failure::Numerical(e.to_string()),
            BadFile(_) => Failure::Artifact(e.to_string()),
            Simulator(s) => s.into(),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<simpel::simulators::SimulatorError> for Failure {
    fn from(e: simpel::simulators::SimulatorError) -> Self {
        use simpel::simulators::SimulatorError::*;
        match e {
            Divergence => Failure::Numerical(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<simpel::bnn::BnnError> for Failure {
    fn from(e: simpel::bnn::BnnError) -> Self {
        use simpel::bnn::BnnError::*;
        match e {
            TrainingDiverged { .. } => Failure::Numerical(e.to_string()),
            BadCheckpoint(_) => Failure::Artifact(e.to_string()),
            Prior(p) => p.into(),
            Score(s) => s.into(),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<simpel::baselines::BaselineError> for Failure {
    fn from(e: simpel::baselines::BaselineError) -> Self {
        use simpel::baselines::BaselineError::*;
        match e {
            AllStartsDiverged => Failure::Numerical(e.to_string()),
            Bnn(b) => b.into(),
            Prior(p) => p.into(),
            Simulator(s) => s.into(),
            InvalidConfig(m) => Failure::Config(m),
        }
    }
}

impl From<simpel::eval::EvalError> for Failure {
    fn from(e: simpel::eval::EvalError) -> Self {
        use simpel::eval::EvalError::*;
        match e {
            NonPositiveVariance => Failure::Numerical(e.to_string()),
            Bnn(b) => b.into(),
            Baseline(b) => b.into(),
            Prior(p) => p.into(),
            Simulator(s) => s.into(),
            BadOutput(m) => Failure::Artifact(m),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<simpel::mbrl::RlError> for Failure {
    fn from(e: simpel::mbrl::RlError) -> Self {
        use simpel::mbrl::RlError::*;
        match e {
            Simulator(s) => s.into(),
            Bnn(b) => b.into(),
            Prior(p) => p.into(),
            Eval(v) => v.into(),
            Io(m) => Failure::Config(m.to_string()),
            InvalidConfig(m) => Failure::Config(m),
            UnknownMethod(m) => Failure::Config(format!("unknown method id `{m}`")),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn run_in_pool(
    workers: usize,
    f: impl FnOnce() -> Result<(), Failure> + Send,
) -> Result<(), Failure> {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(f)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ScoreBench(args) => run_in_pool(args.workers, || score_bench::run(&args)),
        Command::Regression(args) => run_in_pool(args.workers, || regression::run(&args)),
        Command::Rl(args) => run_in_pool(args.workers, || rl::run(&args)),
        Command::Inspect { checkpoint } => inspect::run(&checkpoint),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
