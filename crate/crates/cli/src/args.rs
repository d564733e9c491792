use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cfx",
    version,
    about = "Feasibility-aware counterfactual explanations for tabular data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the classifier and the counterfactual generator, then write a model bundle.
    Train(TrainArgs),
    /// Generate one counterfactual per row of a split and report the metrics.
    Evaluate(EvaluateArgs),
    /// Generate counterfactuals for one instance.
    Generate(GenerateArgs),
    /// Print the classifier's prediction for one instance.
    Predict(PredictArgs),
    /// Write the 2-D t-SNE manifold of training, latent and predicted points.
    Embed(EmbedArgs),
    /// Serve the HTTP JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintArg {
    Unary,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Test,
    Val,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Dataset schema JSON.
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long, value_enum, default_value = "unary")]
    pub constraint: ConstraintArg,
    /// Training configuration JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Where to write the model bundle.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the validation-split report to `<REPORT>.json` and `<REPORT>.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// The CSV the model was trained on; the split is rebuilt from the bundle's seed.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Generation seed; defaults to the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write `<REPORT>.json` and `<REPORT>.csv` instead of printing JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InstanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Instance JSON object keyed by feature name, or `-` for stdin.
    #[arg(long)]
    pub instance: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub input: InstanceArgs,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Target class; defaults to the opposite of the prediction.
    #[arg(long)]
    pub desired: Option<u8>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: InstanceArgs,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Training CSV; rows come from the bundle's training split.
    #[arg(long)]
    pub data: PathBuf,
    /// Points per source.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output TSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Training CSV, needed only for `/api/manifold`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}
