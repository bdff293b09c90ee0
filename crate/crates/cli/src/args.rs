use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use margin_attr::engine::{DEFAULT_BATCH_SIZE, DEFAULT_SIGMA};
use margin_attr::evaluation::{DEFAULT_MAX_FRACTION, DEFAULT_TOP_K};
use margin_attr::Method;

#[derive(Debug, Parser)]
#[command(
    name = "margin-attr",
    version,
    about = "Token attribution by input marginalization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Attribute every corpus sentence and write per-sentence maps and heatmaps.
    Attribute(AttributeArgs),
    /// Compare attribution methods with deletion curves, IoT and the neutral-token audit.
    Evaluate(EvaluateArgs),
    /// Correlate truncated against full marginalization over a grid of rules.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSONL corpus of token ids, labels and optional tags.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Vocabulary file, one token per line.
    #[arg(long)]
    pub vocab: PathBuf,
    /// `toy:nb`, `remote:URI`, or `remote` to read MARGIN_ATTR_ENDPOINT.
    #[arg(long, default_value = "toy:nb")]
    pub classifier: String,
    /// `toy:unigram`, `toy:bigram`, `uniform`, `prior`, `remote:URI` or `remote`.
    #[arg(long, default_value = "toy:unigram")]
    pub likelihood: String,
    /// Add-α smoothing for the toy classifier and likelihood models.
    #[arg(long, default_value_t = 1.0)]
    pub smoothing: f64,
    /// Target class; defaults to each sentence's predicted class.
    #[arg(long = "class")]
    pub class: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Sentences per classifier call.
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Remote oracle timeout in seconds.
    #[arg(long, default_value_t = 30)]
    pub timeout: u64,
    /// Remote oracle retries after a failed attempt.
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
}

#[derive(Debug, Clone, Args)]
pub struct TruncationArgs {
    /// Keep candidates with likelihood above σ; 0 marginalizes over everything.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Keep the n most likely candidates instead of thresholding.
    #[arg(long)]
    pub top_n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Html,
    Ansi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Metric {
    Auc,
    Iot,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Polarity {
    /// `pos` for class 1, `neg` for class 0.
    Auto,
    Pos,
    Neg,
}

#[derive(Debug, Clone, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    /// Attribution method; repeat for several.
    #[arg(long = "method", value_parser = parse_method, default_values = ["marg"])]
    pub methods: Vec<Method>,
    #[arg(long = "format", value_enum, value_delimiter = ',', default_values = ["json", "html"])]
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    #[arg(long = "method", value_parser = parse_method, default_values = ["zero", "unk", "marg"])]
    pub methods: Vec<Method>,
    /// Metric to report; repeat for several.
    #[arg(long = "metric", value_enum, default_values = ["auc"])]
    pub metrics: Vec<Metric>,
    /// Seed for deletion-curve replacement sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Deletion curves stop once this fraction of tokens is replaced.
    #[arg(long, default_value_t = DEFAULT_MAX_FRACTION)]
    pub max_fraction: f64,
    /// Size of the top-attributed set for IoT.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub polarity: Polarity,
    #[arg(long = "format", value_enum, value_delimiter = ',', default_values = ["csv", "json"])]
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Thresholds to sweep, comma separated.
    #[arg(long = "sigma", value_delimiter = ',')]
    pub sigmas: Vec<f64>,
    /// Fixed candidate counts to sweep, comma separated.
    #[arg(long = "top-n", value_delimiter = ',')]
    pub top_ns: Vec<usize>,
    /// Refuse vocabularies larger than this.
    #[arg(long, default_value_t = 5000)]
    pub max_vocab: usize,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}
