//! Command-line front end: simulation studies, sweeps, diagnostics, and
//! training or applying rules on CSV datasets.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

pub mod commands;
pub mod io;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or flag combinations (exit code 2).
    #[error("{0}")]
    Usage(String),
    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] rotsolve::Error),
}

impl CliError {
    pub fn data(path: &Path, message: impl Into<String>) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rotsolve", version, about = "Rotate-and-solve linear discriminant analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo study on a simulated model.
    Simulate(SimulateArgs),
    /// Fit a rule on a labelled CSV file.
    Train(TrainArgs),
    /// Apply a saved rule to a CSV file.
    Predict(PredictArgs),
    /// Mean errors across a ρ grid or a set of sparsity levels.
    Sweep(SweepArgs),
    /// Cumulative-energy curves of the discriminant direction before and after rotation.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Toy1,
    Toy2,
    Toy3,
    M1,
    M2,
    M3,
    Rand1,
    Rand2,
}

impl ModelName {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Toy1 => "toy1",
            ModelName::Toy2 => "toy2",
            ModelName::Toy3 => "toy3",
            ModelName::M1 => "m1",
            ModelName::M2 => "m2",
            ModelName::M3 => "m3",
            ModelName::Rand1 => "rand1",
            ModelName::Rand2 => "rand2",
        }
    }

    pub fn is_random(self) -> bool {
        matches!(self, ModelName::Rand1 | ModelName::Rand2)
    }
}

/// Flags describing a simulated population.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: ModelName,
    /// Feature count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub p: u64,
    /// Training rows in class 1.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n1: u64,
    /// Training rows in class 2 (defaults to n1).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n2: Option<u64>,
    /// Oracle error the toy and structured models are calibrated to.
    #[arg(long, conflicts_with = "sparsity")]
    pub target_error: Option<f64>,
    /// Fraction of nonzero entries of β for the random models.
    #[arg(long)]
    pub sparsity: Option<f64>,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Replicates.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    /// Comma-separated methods: oracle, lda, ir, nsc, road, rs-<base>, rs-econ-<base>, o-rs-<base>.
    #[arg(long, default_value = "road,rs-road,oracle")]
    pub methods: String,
    /// ρ for rotate-and-solve methods: a positive number or `cv`.
    #[arg(long, default_value = "0.5")]
    pub rho: String,
    /// Candidate ρ values when `--rho cv` (grid syntax as in `sweep --grid`).
    #[arg(long)]
    pub rho_grid: Option<String>,
    /// Test rows per class (defaults to max(n1, n2)).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_test: Option<u64>,
    /// Folds for every internal cross-validation.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    pub cv_folds: u64,
    /// Rebuild the model for every replicate (random models).
    #[arg(long)]
    pub redraw_model: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Labelled CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// lda, ir, nsc, road, or rs-<base> / rs-econ-<base>.
    #[arg(long)]
    pub method: String,
    /// ρ for rotate-and-solve methods: a positive number or `cv`.
    #[arg(long, default_value = "0.5")]
    pub rho: String,
    /// Candidate ρ values when `--rho cv`.
    #[arg(long)]
    pub rho_grid: Option<String>,
    /// Rotate by the non-vanishing eigenvectors only.
    #[arg(long)]
    pub economy: bool,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    pub cv_folds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write the rule JSON.
    #[arg(long)]
    pub model_out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    /// Rule JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV file; a label column is optional.
    #[arg(long)]
    pub data: PathBuf,
    /// Predictions CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Rho,
    Sparsity,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub kind: SweepKind,
    #[command(flatten)]
    pub model: ModelArgs,
    /// ρ values for `--kind rho`: `a,b,c`, `start:step:stop` or `log:lo:hi:n`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Sparsity levels for `--kind sparsity`, same syntax as `--grid`.
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long, default_value = "road,rs-road,oracle")]
    pub methods: String,
    /// ρ for rotate-and-solve methods in sparsity sweeps.
    #[arg(long, default_value = "0.5")]
    pub rho: String,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    pub cv_folds: u64,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelName>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub p: Option<u64>,
    /// Training rows in class 1 for the empirical rotations.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub n1: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n2: Option<u64>,
    #[arg(long, conflicts_with = "sparsity")]
    pub target_error: Option<f64>,
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Replicates averaged for the empirical curve.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    /// Rejected: the curves need the population β, which a dataset does not provide.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
    }
}
