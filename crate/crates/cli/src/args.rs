use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ktbench", version, about = "Knowledge-tracing benchmark: baselines, deep models, cross-validation and grid search")]
pub struct Cli {
    /// TOML file whose keys are long flag names; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Maximum worker threads (default: all CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a raw delimited log into the canonical dataset layout.
    Preprocess(PreprocessArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Cross-validate one model configuration.
    Train(TrainArgs),
    /// Cross-validate every grid point of a deep model and pick the best.
    Gridsearch(GridArgs),
    /// Offline analyses of saved results.
    Analyze {
        #[command(subcommand)]
        analysis: Analysis,
    },
    /// Render comparison tables from saved results.
    Report(ReportArgs),
    /// Run gradient, causality and metric-oracle checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw delimited file with a header row.
    pub raw: Option<PathBuf>,
    /// TOML column mapping: `student`, `skill`, `correct`, `delimiter`.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub students: Option<usize>,
    #[arg(long)]
    pub exercises: Option<usize>,
    #[arg(long)]
    pub concepts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub guess: Option<f64>,
    #[arg(long)]
    pub learning_increment: Option<f64>,
    #[arg(long)]
    pub ability_std: Option<f64>,
    #[arg(long)]
    pub difficulty_std: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Options shared by `train` and `gridsearch`.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Model tag, e.g. `lstm-dkt` or `nap9m`.
    #[arg(long)]
    pub model: Option<String>,
    /// Canonical dataset directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// `none`, `cut:L` or `split:L`.
    #[arg(long)]
    pub max_attempt: Option<String>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// TOML hyperparameter overrides (kebab-case field names).
    #[arg(long)]
    pub hyper: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Selection metric.
    #[arg(long)]
    pub select: Option<String>,
    /// TOML overrides of the searched value lists.
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Analysis {
    /// Loss in each metric when selecting configurations by another.
    SelectionLoss(SelectionLossArgs),
}

#[derive(Debug, Args)]
pub struct SelectionLossArgs {
    /// Results directories.
    #[arg(long, num_args = 1..)]
    pub results: Vec<PathBuf>,
    /// Metrics to compare (default: all).
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, num_args = 1..)]
    pub results: Vec<PathBuf>,
    /// `text`, `csv` or `json`.
    #[arg(long)]
    pub format: Option<String>,
    /// Metric used to pick each model's configuration.
    #[arg(long)]
    pub select: Option<String>,
    /// Also write the report and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random metric instances to compare against the oracle.
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
