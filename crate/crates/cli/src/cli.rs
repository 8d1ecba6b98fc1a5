use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fcfnn", version, about = "Train and run feed-forward survey profiling networks")]
pub struct Cli {
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labelled survey CSV.
    Generate(GenerateArgs),
    /// Train a network and write the model file (and optionally a history CSV).
    Train(TrainArgs),
    /// Report accuracy and mean loss of a model on a labelled CSV.
    Evaluate(EvaluateArgs),
    /// Rank directions for every row of a CSV and write the augmented CSV.
    Predict(PredictArgs),
    /// Print a model's architecture and, given a probe CSV, its dead ReLU units.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 936)]
    pub rows: usize,
    #[arg(long, default_value_t = 29)]
    pub classes: usize,
    #[arg(long, default_value_t = 35)]
    pub features: usize,
    /// Source respondents per class; chosen automatically when omitted.
    #[arg(long)]
    pub base_rows: Option<usize>,
    /// Output rows per source row (1 or even).
    #[arg(long, default_value_t = 2)]
    pub factor: usize,
    #[arg(long, default_value_t = 0.08)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0.02)]
    pub perturbation: f64,
    /// Omit the per-direction 0/1 columns and keep only `label`.
    #[arg(long)]
    pub no_indicators: bool,
    /// Also write the schema the file follows.
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    He,
    Uniform,
}

#[derive(Debug, Args)]
pub struct SchemaArg {
    /// Schema JSON; the built-in survey schema when omitted.
    #[arg(long, env = "FCFNN_SCHEMA")]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArg,
    #[arg(long)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// History CSV; appended to when resuming.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Validation fraction.
    #[arg(long, default_value_t = 0.1)]
    pub vs: f64,
    /// Batch size.
    #[arg(long, default_value_t = 20)]
    pub bs: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value = "relu-softmax")]
    pub activation_preset: String,
    /// Architecture preset: survey-default or compact.
    #[arg(long, default_value = "survey-default", conflicts_with = "hidden")]
    pub preset: String,
    /// Hidden ReLU widths, e.g. 64,32 (no dropout).
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub no_bias: bool,
    #[arg(long, value_enum, default_value_t = InitArg::He)]
    pub init: InitArg,
    /// Continue training an existing model; its architecture and schema are used.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write wall_ms = 0 so repeated runs give identical history files.
    #[arg(long)]
    pub no_wall_time: bool,
    /// Run on one thread.
    #[arg(long)]
    pub sequential: bool,
    /// Do not print per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Augmented CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
    /// Print a ranked report line per row.
    #[arg(long)]
    pub report: bool,
    /// Probabilities below this are printed in scientific notation.
    #[arg(long, default_value_t = fcfnn::io::DEFAULT_REPORT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV whose rows are used to look for dead ReLU units.
    #[arg(long)]
    pub probe: Option<PathBuf>,
}
