//! Command-line entry point: ingestion, Rayleigh Quotient analytics,
//! training, evaluation, perturbation synthesis, verification suites, and
//! parameter sweeps. Every subcommand is a pure function of its inputs,
//! flags, and seed; all artifacts are JSON or JSON-lines.

mod cfg;
mod cmds;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use rqgnn::Error;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "rqgnn",
    about = "Graph-level anomaly detection via Rayleigh Quotient spectral analytics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// TUDataset directory (expects <name>_A.txt and friends).
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Dataset name; defaults to the unique file prefix found in --data.
    #[arg(long)]
    pub name: Option<String>,

    /// Output file or directory, depending on the subcommand.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Root seed for all randomness [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Config file with `key = value` lines; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Training hyperparameter overrides (defaults < config file < flags).
#[derive(Debug, Args, Clone)]
pub struct TrainArgs {
    /// Learning rate [default: 0.005]
    #[arg(long)]
    pub lr: Option<f64>,

    /// Batch size [default: 512]
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Epoch budget [default: 200]
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Hidden dimension d [default: 64]
    #[arg(long)]
    pub d: Option<usize>,

    /// Wavelet count q [default: 4]
    #[arg(long)]
    pub q: Option<usize>,

    /// Chebyshev base order K [default: 6]
    #[arg(long = "k", visible_alias = "K")]
    pub base_order: Option<usize>,

    /// Dropout rate before the head [default: 0.4]
    #[arg(long)]
    pub dropout: Option<f64>,

    /// Class-balance hyperparameter beta [default: 0.999]
    #[arg(long)]
    pub beta: Option<f64>,

    /// Focal-loss hyperparameter gamma [default: 1.5]
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a dataset 70/15/15, train, and write history, checkpoint, and
    /// test metrics into --out.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate a checkpoint on a dataset and write metrics JSON to --out.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint JSON produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Rayleigh Quotient histogram of a dataset's two classes.
    RqDist {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of equal-width bins.
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Per-bin inter/intra distance ratios between the class histograms.
    DistanceRatio {
        #[command(flatten)]
        common: CommonArgs,
        /// Disjoint subsamples per class.
        #[arg(long, default_value_t = 4)]
        subsamples: usize,
        /// Number of equal-width bins.
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Build a perturbation anomaly corpus and write it as TUDataset text.
    Perturb {
        #[command(flatten)]
        common: CommonArgs,
        /// Fraction of normal graphs to perturb.
        #[arg(long)]
        fraction: f64,
        /// Per-pair adjacency flip probability.
        #[arg(long)]
        prob: f64,
    },
    /// Monte-Carlo verification of the spectral identities and bounds.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Trials per check.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Train once per value of one hyperparameter; JSON-lines results.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Hyperparameter to vary: d, q, K, beta, or gamma.
        #[arg(long, value_parser = cmds::parse_sweep_param)]
        param: cmds::SweepParam,
        /// Comma-separated values for the swept parameter.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Finite-difference check of the model gradients on a built-in fixture.
    Gradcheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Train { common, train } => cmds::run_train(&common, &train),
        Command::Eval { common, checkpoint } => cmds::run_eval(&common, &checkpoint),
        Command::RqDist { common, bins } => cmds::run_rq_dist(&common, bins),
        Command::DistanceRatio {
            common,
            subsamples,
            bins,
        } => cmds::run_distance_ratio(&common, subsamples, bins),
        Command::Perturb {
            common,
            fraction,
            prob,
        } => cmds::run_perturb(&common, fraction, prob),
        Command::Verify { common, trials } => cmds::run_verify(&common, trials),
        Command::Sweep {
            common,
            train,
            param,
            values,
        } => cmds::run_sweep(&common, &train, param, &values),
        Command::Gradcheck { common, h } => cmds::run_gradcheck(&common, h),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::MissingFile { .. }
        | Error::Io { .. }
        | Error::Parse { .. }
        | Error::Split(_)
        | Error::Shape(_) => EXIT_DATA,
        Error::OracleCapacity { .. }
        | Error::Numeric(_)
        | Error::DegenerateSignal
        | Error::NanGradient { .. }
        | Error::Diverged { .. } => EXIT_NUMERIC,
    }
}
