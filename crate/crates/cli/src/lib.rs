//! Command-line experiment runner: dataset generation, single runs,
//! ablations, λ/γ sweeps and embedding export, all writing CSV.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use bdg_core::data::ShapeKind;
use bdg_core::{BdgError, Result, Variant};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{ExperimentConfig, OUTPUT_ROOT_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Process exit status for a failed command.
pub fn exit_code(err: &BdgError) -> i32 {
    match err {
        BdgError::Divergence(_) => EXIT_DIVERGENCE,
        BdgError::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "bdg", version, about = "Bidirectional domain generation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic `source.csv` / `target.csv` pair.
    GenData(GenDataArgs),
    /// Train one model and stream `metrics.csv`.
    Train(TrainArgs),
    /// Run every variant for every seed into `table.csv` and `summary.csv`.
    Ablate(AblateArgs),
    /// Sweep λ or γ over a grid into `sweep.csv` and `sweep_summary.csv`.
    Sweep(SweepArgs),
    /// Dump classifier trunk activations for X_s, F_t, F_s and X_t.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON experiment config; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, relative to $BDG_OUTPUT_ROOT when that is set.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataFlags {
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<ShapeKind>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_domain: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub rotation: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub translation: Option<Vec<f64>>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Relative class frequencies, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub imbalance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub pretrain_iters: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub eval_period: Option<usize>,
    #[arg(long)]
    pub classifier_lr: Option<f64>,
    #[arg(long)]
    pub generator_lr: Option<f64>,
    /// Seed of the synthetic data pair.
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long, requires = "target")]
    pub source: Option<PathBuf>,
    #[arg(long, requires = "source")]
    pub target: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub data: DataFlags,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Parallel runs; defaults to the number of cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Lambda,
    Gamma,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Gamma => "gamma",
        }
    }
}

pub const DEFAULT_GRID: [f64; 7] = [0.1, 0.2, 0.5, 1.0, 1.2, 1.5, 2.0];

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long, value_enum, default_value = "lambda")]
    pub param: SweepParam,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GRID)]
    pub grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// `checkpoint.json` written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long, requires = "target")]
    pub source: Option<PathBuf>,
    #[arg(long, requires = "source")]
    pub target: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<ShapeKind, String> {
    match s {
        "ring" | "gaussian_ring" => Ok(ShapeKind::GaussianRing),
        "moons" => Ok(ShapeKind::Moons),
        _ => Err(format!("unknown shape {s:?}; expected ring or moons")),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a).map(|_| ()),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::ExportEmbeddings(a) => commands::export_embeddings(&a),
    }
}
