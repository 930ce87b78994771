//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "odlae",
    version,
    about = "Online deep learning with autoencoder backbones",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate one model prequentially on one stream.
    Run(RunArgs),
    /// Run a grid over (hidden layers, hidden units).
    Sweep(SweepArgs),
    /// Inspect checkpoint files.
    #[command(subcommand)]
    Checkpoint(CheckpointCommand),
}

#[derive(Debug, Subcommand)]
pub enum CheckpointCommand {
    /// Print the header and counters of a checkpoint as JSON.
    Info { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DriftArg {
    None,
    LabelSwap,
    PermuteFeatures,
    Rotate,
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    /// Read `key=value` defaults from a file; flags on the command line win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// odlae1, odlae2, odldae1, odldae2 or linear_ogd_baseline.
    #[arg(long, default_value = "odlae1")]
    pub variant: String,

    /// Number of hidden layers in the encoder.
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden_units: usize,
    #[arg(long, default_value_t = 30)]
    pub attention_dim: usize,
    /// identity, relu or sigmoid.
    #[arg(long, default_value = "sigmoid")]
    pub output_activation: String,

    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,

    /// Hedge discount factor.
    #[arg(long, default_value_t = 0.99)]
    pub theta0: f64,
    /// Hedge weights never fall below beta_floor / layers.
    #[arg(long, default_value_t = 0.01)]
    pub beta_floor: f64,
    /// Discount of the reconstruction coefficient.
    #[arg(long, default_value_t = 0.99)]
    pub beta_re: f64,
    /// Discount of the prediction coefficient.
    #[arg(long, default_value_t = 0.99)]
    pub beta_pre: f64,
    /// Initial reconstruction coefficient; the prediction one is 1 - a_re.
    #[arg(long, default_value_t = 0.5)]
    pub a_re: f64,
    /// Keep the coefficients fixed at their initial values.
    #[arg(long)]
    pub fixed_tradeoff: bool,

    /// Training corruption for the denoising variants: none, masking:P or gaussian:S.
    #[arg(long, default_value = "masking:0.1")]
    pub noise: String,

    /// CSV path (optionally .gz), or `synthetic`.
    #[arg(long, default_value = "synthetic")]
    pub dataset: String,
    /// Label column: 0-based index or header name.
    #[arg(long, default_value = "0")]
    pub label_col: String,
    #[arg(long)]
    pub has_header: bool,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// minmax (running), prescan (whole file) or none.
    #[arg(long, default_value = "minmax")]
    pub scaling: String,
    /// Use at most this many rows of the CSV.
    #[arg(long)]
    pub limit: Option<usize>,

    /// Synthetic stream: number of classes.
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Synthetic stream: number of features.
    #[arg(long, default_value_t = 2)]
    pub features: usize,
    /// Synthetic stream: per-feature standard deviation.
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Synthetic stream: number of examples.
    #[arg(long, default_value_t = 5000)]
    pub length: usize,

    #[arg(long, value_enum, default_value_t = DriftArg::None)]
    pub drift: DriftArg,
    /// First example (0-based) affected by the drift.
    #[arg(long, default_value_t = 0)]
    pub drift_at: usize,
    /// Label permutation for label-swap drift, e.g. `1,0`. Defaults to reversal.
    #[arg(long)]
    pub drift_perm: Option<String>,

    /// Corruption applied to the evaluation stream.
    #[arg(long, default_value = "none")]
    pub eval_noise: String,

    /// Seeds model initialisation and training corruption.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Seeds synthetic data, drift and evaluation noise. Defaults to --seed.
    #[arg(long)]
    pub data_seed: Option<u64>,

    /// Examples per accuracy window.
    #[arg(long, default_value_t = 1000)]
    pub window: u64,
    /// Summary JSON path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of windowed accuracy.
    #[arg(long)]
    pub window_csv: Option<PathBuf>,
    /// CSV with one diagnostic row per step.
    #[arg(long)]
    pub trace_csv: Option<PathBuf>,

    /// Write a checkpoint when the run stops.
    #[arg(long)]
    pub checkpoint_out: Option<PathBuf>,
    /// Continue from a checkpoint; the stream is replayed to its offset.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many examples in this invocation.
    #[arg(long)]
    pub max_steps: Option<u64>,
}

#[derive(Clone, Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Hidden-layer counts of the grid.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    pub grid_layers: Vec<usize>,
    /// Hidden-unit counts of the grid.
    #[arg(long, value_delimiter = ',', default_value = "32")]
    pub grid_hidden: Vec<usize>,
    /// Search layers at the first hidden width, then widths at the best depth.
    #[arg(long)]
    pub two_phase: bool,
    /// Widths tried in the second phase.
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
    pub phase2_hidden: Vec<usize>,
    /// Summary JSON of the sweep; stderr gets a one-line note when absent.
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
}

/// Flags that take no value; a config entry `key=true` turns them on.
pub const SWITCHES: &[&str] = &["fixed-tradeoff", "has-header", "two-phase"];
