use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug, Clone)]
#[command(name = "gcnx", version, about = "Train molecular GCNs, explain their predictions and mine salient substructures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Fit a model and write a checkpoint plus training log.
    Train(TrainArgs),
    /// Write per-molecule heatmaps for both classes as JSON lines.
    Explain(ExplainArgs),
    /// Fidelity, contrastivity and sparsity per explanation method.
    Metrics(MetricsArgs),
    /// Rank substructures that recur in explanations.
    Mine(MineArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    All,
    Train,
    Validation,
    Test,
}

impl Part {
    pub fn as_str(self) -> &'static str {
        match self {
            Part::All => "all",
            Part::Train => "train",
            Part::Validation => "validation",
            Part::Test => "test",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DataArgs {
    /// CSV file, or `synth:<motif>:<n>` for a planted-motif corpus.
    #[arg(long)]
    pub data: String,
    #[arg(long, default_value = "smiles")]
    pub smiles_column: String,
    /// Binary label column (e.g. `p_np`, `Class`, `NR-ER`).
    #[arg(long, default_value = "label")]
    pub task_column: String,
    /// Column holding molecule ids; row indices otherwise.
    #[arg(long)]
    pub id_column: Option<String>,
    /// Seeds the split, the initialization, the shuffle and the layouts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub split: String,
    #[arg(long)]
    pub stratified: bool,
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Graph convolution widths.
    #[arg(long, default_value = "128,256,512")]
    pub layers: String,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    /// Plain cross-entropy instead of inverse-frequency class weights.
    #[arg(long)]
    pub unweighted: bool,
    /// Output path; defaults to `<out-dir>/checkpoint.json`.
    #[arg(long)]
    #[serde(skip)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExplainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    #[serde(skip)]
    pub checkpoint: PathBuf,
    /// Comma-separated: gradient, cam, grad-cam, grad-cam@L, grad-cam-avg, eb, c-eb.
    #[arg(long, default_value = "gradient,grad-cam,grad-cam-avg,eb,c-eb")]
    pub methods: String,
    /// Also write an SVG and a DOT depiction per molecule and method.
    #[arg(long)]
    pub render: bool,
    #[arg(long, value_enum, default_value_t = Part::All)]
    pub part: Part,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MetricsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    #[serde(skip)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "gradient,grad-cam,grad-cam-avg,eb,c-eb")]
    pub methods: String,
    /// Saliency above which nodes are occluded.
    #[arg(long, default_value_t = 0.01)]
    pub fidelity_threshold: f64,
    /// Saliency above which nodes count as marked.
    #[arg(long, default_value_t = 0.01)]
    pub binarize_threshold: f64,
    #[arg(long, value_enum, default_value_t = Part::Test)]
    pub part: Part,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    #[serde(skip)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "grad-cam")]
    pub method: String,
    /// Atoms with normalized saliency strictly above this are activated.
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    /// Report substructures found in more than this many molecules.
    #[arg(long, default_value_t = 10)]
    pub min_occurrence: usize,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Use every explanation, not only correctly predicted positives.
    #[arg(long)]
    pub all_predictions: bool,
    #[arg(long, value_enum, default_value_t = Part::All)]
    pub part: Part,
}
