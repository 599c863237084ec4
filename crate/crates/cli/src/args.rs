use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mcce::concepts::OutputSpace;
use mcce::evaluation::Metric;
use mcce::explainers::Method;

#[derive(Debug, Parser)]
#[command(name = "mcce", version, about = "Concept effect estimation under partial concept observation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with exact ground-truth effects.
    Synth(SynthArgs),
    /// Fit an explainer (or the interpretable predictor) and save it as JSON.
    Fit(FitArgs),
    /// Estimate one effect per counterfactual pair.
    Explain(ExplainArgs),
    /// Score effect estimates against the empirical pair effects.
    Evaluate(EvaluateArgs),
    /// Coefficient table of a fitted model against a baseline class.
    Report(ReportArgs),
    /// Class predictions and macro-F1 of a fitted model.
    Predict(PredictArgs),
    /// Fit, explain and evaluate every method under every one- and
    /// two-attribute mask.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Attributes withheld from the explainer.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<String>,
    /// Output space; defaults to the method's native space.
    #[arg(long)]
    pub space: Option<OutputSpace>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Generator configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "mcce")]
    pub method: Method,
    /// Number of pseudo-concepts; defaults to the visible concept width.
    #[arg(long)]
    pub j: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    /// Fit to one-hot gold labels instead of the black-box outputs.
    #[arg(long)]
    pub predictor: bool,
    /// Model file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fitted model; required for mcce and slearner.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Defaults to the model's method.
    #[arg(long)]
    pub method: Option<Method>,
    /// Generator ground truth, for the oracle method.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Required by the approx method.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Effects file (JSONL).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Effects file written by `explain`.
    #[arg(long)]
    pub effects: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = Metric::ALL)]
    pub metric: Vec<Metric>,
    /// Recorded in the report metadata.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub baseline_class: usize,
    /// Coefficient CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// Generator configuration; a fresh dataset is drawn per seed.
    #[arg(long, conflicts_with_all = ["schema", "samples", "pairs"])]
    pub config: Option<PathBuf>,
    /// Alternatively, a prepared dataset.
    #[arg(long, requires_all = ["samples", "pairs"])]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "mcce,slearner")]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_values_t = Metric::ALL)]
    pub metric: Vec<Metric>,
    /// One or more seeds; defaults to the configuration's seed (or 0).
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    #[arg(long)]
    pub j: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    /// Forces one output space for every method.
    #[arg(long)]
    pub space: Option<OutputSpace>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
