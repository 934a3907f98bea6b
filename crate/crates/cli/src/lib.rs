//! Command-line front end: argument definitions and one function per
//! subcommand. `main` only parses, sets up logging and the thread pool, and
//! maps errors to exit codes.

pub mod commands;
mod error;
pub mod io;
pub mod validate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "kaap", version, about = "Multimodal attribution, fusion training and label tooling")]
pub struct Cli {
    /// Worker threads for internal parallelism (default: logical CPUs).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain one prediction: report JSON plus heatmaps.
    Explain(ExplainArgs),
    /// Run the oracle comparison suites.
    Validate(ValidateArgs),
    /// Train a fusion network on the seeded synthetic dataset.
    Train(TrainArgs),
    /// Dice-based selection of the partition granularity.
    Selectk(SelectkArgs),
    /// Average per-modality probabilities into labels and filter them.
    Labelfuse(LabelfuseArgs),
    /// Print a model's class probabilities for one sample.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Model file (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Sample file (JSON).
    #[arg(long)]
    pub sample: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = kaap_core::kaap::DEFAULT_K_IMAGE)]
    pub k_image: usize,
    #[arg(long, default_value_t = kaap_core::kaap::DEFAULT_K_SPEECH)]
    pub k_speech: usize,
    #[arg(long, default_value_t = kaap_core::kaap::DEFAULT_K_TEXT)]
    pub k_text: usize,
    /// Class to explain (name or index) instead of the predicted one.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Where to write the comparison report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Use the uncorrected KP coefficients; the run must then fail.
    #[arg(long)]
    pub mutate: bool,
    /// Random two-player games in the equivalence suite.
    #[arg(long, default_value_t = 1000)]
    pub games: usize,
    /// Random additive models in the efficiency suite.
    #[arg(long, default_value_t = 100)]
    pub additive: usize,
    /// Random instances in the differential suite.
    #[arg(long, default_value_t = 50)]
    pub differential: usize,
    /// Random three-player games in the gap histogram.
    #[arg(long, default_value_t = 1000)]
    pub gap_games: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `vista` or `baseline#2` .. `baseline#6`.
    #[arg(long, default_value = "vista")]
    pub variant: String,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
    pub optimizer: OptimizerArg,
    /// Branch embedding width.
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    /// Seeds the dataset, the initialization and the shuffle.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Training samples.
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    /// Extra held-out samples used for early stopping and the test report.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Output directory for `checkpoint.json` and `training.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectkArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// JSON array of samples.
    #[arg(long)]
    pub samples: PathBuf,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Modalities to analyse (default: all three).
    #[arg(long, value_delimiter = ',')]
    pub modality: Vec<kaap_core::Modality>,
    #[arg(long, default_value_t = kaap_core::kselect::DEFAULT_K_MAX)]
    pub k_max: usize,
    #[arg(long, default_value_t = kaap_core::kselect::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Top fraction kept when binarizing maps.
    #[arg(long, default_value_t = kaap_core::kselect::DEFAULT_TOP_FRACTION)]
    pub q: f64,
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct LabelfuseArgs {
    /// CSV with columns id,img_p0..img_p3,sp_p0..sp_p3,txt_p0..txt_p3.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for `fused.csv` and `sweep.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = kaap_core::labelfuse::DEFAULT_TAU)]
    pub tau: f64,
    /// Thresholds of the sweep report.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.33, 0.55, 1.0])]
    pub sweep: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub sample: PathBuf,
    /// Modalities kept; the rest are zeroed (default: all).
    #[arg(long, value_delimiter = ',')]
    pub keep: Option<Vec<kaap_core::Modality>>,
}

/// Runs one parsed command in the current thread pool.
pub fn run(command: &Command) -> CliResult<()> {
    match command {
        Command::Explain(a) => commands::explain(a),
        Command::Validate(a) => commands::validate(a),
        Command::Train(a) => commands::train(a),
        Command::Selectk(a) => commands::selectk(a),
        Command::Labelfuse(a) => commands::labelfuse(a),
        Command::Predict(a) => commands::predict(a),
    }
}
