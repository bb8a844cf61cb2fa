use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;
mod config;
mod svg;

/// A bad flag, config value or refused overwrite.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "hypercluster", version, about = "Resolution-invariant clustering of functional data")]
pub struct Cli {
    /// TOML file with defaults; top-level keys apply to every command,
    /// `[command]` tables to one. Flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for all outputs.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,

    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled multi-channel sinusoid dataset (JSONL).
    Synth(SynthArgs),
    /// Convert MNIST IDX files to JSONL point sets.
    IngestMnist(IngestArgs),
    /// Train the hypernetwork on a JSONL dataset.
    Train(TrainArgs),
    /// Predict SIREN weights for every sample at one resolution.
    Embed(EmbedArgs),
    /// Cluster an embedding CSV.
    Cluster(ClusterArgs),
    /// AMI/ARI over resolutions, algorithms and seeds.
    Eval(EvalArgs),
    /// 2-D PCA projection of embeddings as CSV and SVG.
    Project(ProjectArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Number of classes.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Class frequencies (defaults to 1, 3, 5, ...).
    #[arg(long, value_delimiter = ',')]
    pub freqs: Option<Vec<f64>>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    /// Point-count range `min,max` (or a single count).
    #[arg(long, value_delimiter = ',')]
    pub i_range: Option<Vec<usize>>,
    /// Amplitude range `lo,hi`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub amp: Option<Vec<f64>>,
    /// Phase range `lo,hi` in radians.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub phase: Option<Vec<f64>>,
    /// Random observation locations instead of a uniform grid.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub irregular: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file name inside the output directory.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Keep this many randomly chosen samples.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Keep only these digits.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<u8>>,
    /// Grid side of the stored point sets.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training resolutions, e.g. `14,28,56`.
    #[arg(long, value_delimiter = ',')]
    pub r_train: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub spec_layers: Option<usize>,
    #[arg(long)]
    pub spec_width: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub lr_final: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub val_resolution: Option<usize>,
    #[arg(long)]
    pub d_rff: Option<usize>,
    #[arg(long)]
    pub sigma_rff: Option<f64>,
    /// Hidden width of the per-point encoder MLP.
    #[arg(long)]
    pub width: Option<usize>,
    /// Pooled representation size.
    #[arg(long)]
    pub ell: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub raw_x: Option<bool>,
    #[arg(long)]
    pub head_hidden: Option<usize>,
    /// Also keep a checkpoint after every validation pass.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub checkpoints: Option<bool>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// `kmeans` or `gmm`.
    #[arg(long)]
    pub algo: Option<String>,
    /// Cluster count (defaults to the number of labels).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub zscore: Option<bool>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Resolutions seen in training.
    #[arg(long, value_delimiter = ',')]
    pub r_train: Option<Vec<usize>>,
    /// Resolutions used only here.
    #[arg(long, value_delimiter = ',')]
    pub held_out: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub algos: Option<Vec<String>>,
    /// Number of clustering seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub pixel_baseline: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub zscore: Option<bool>,
    /// AMI normalizer: `arithmetic` or `max`.
    #[arg(long)]
    pub normalizer: Option<String>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ProjectArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub resolutions: Option<Vec<usize>>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub zscore: Option<bool>,
    #[arg(long)]
    pub threads: Option<usize>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<hypercluster::Error>() {
            return if e.is_numerical() {
                4
            } else if matches!(e, hypercluster::Error::InvalidArgument(_)) {
                2
            } else {
                3
            };
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "warn" } else { "info" }))
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
