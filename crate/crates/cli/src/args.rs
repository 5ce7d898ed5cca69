use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "coherence", version, about = "Image-caption coherence relations toolkit")]
pub struct Cli {
    /// Image cache and run-log directory.
    #[arg(long, global = true, env = "COHERENCE_CACHE_DIR", default_value = ".coherence-cache")]
    pub cache_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load caption files, record pairs, and populate the image cache.
    Ingest(IngestArgs),
    /// Run the annotation HTTP API.
    Serve(ServeArgs),
    /// Collapse annotated relation sets to single labels.
    MapLabels(MapLabelsArgs),
    /// Corpus statistics tables.
    Stats(StatsArgs),
    /// Train the fusion relation classifier.
    TrainClassifier(TrainClassifierArgs),
    /// Score a saved classifier on a recorded split.
    EvalClassifier(EvalClassifierArgs),
    /// Train the relation-conditioned captioner.
    TrainCaptioner(TrainCaptionerArgs),
    /// Generate captions from a saved captioner.
    Generate(GenerateArgs),
    /// CIDEr of candidate captions against references.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Ground-truth caption TSV (caption TAB url).
    #[arg(long)]
    pub captions: PathBuf,
    /// Model-output caption TSV.
    #[arg(long)]
    pub model_outputs: Option<PathBuf>,
    /// Write deterministic synthetic images into the fixture cache.
    #[arg(long)]
    pub seed_fixtures: bool,
    #[arg(long, default_value_t = 256)]
    pub fixture_bytes: usize,
    /// Fetch every image through the network cache.
    #[arg(long, conflicts_with = "seed_fixtures")]
    pub fetch: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub model_outputs: Option<PathBuf>,
    /// Annotation store, created when missing; every submission is appended.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub annotators: Vec<String>,
    #[arg(long, default_value_t = coherence_core::service::DEFAULT_OVERLAP)]
    pub overlap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Proxy cached images under /image/<pair_id>.
    #[arg(long)]
    pub proxy_images: bool,
    /// Write the assignment plan and exit.
    #[arg(long)]
    pub plan_only: bool,
}

#[derive(Debug, Args)]
pub struct MapLabelsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Markdown,
    PlotdataJson,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Ground-truth caption TSV.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub model_outputs: Option<PathBuf>,
    /// JSON lines of {pair_id, label} naming the relation each generated
    /// caption was requested with (table 5).
    #[arg(long)]
    pub requested: Option<PathBuf>,
    /// Comma-separated: 1, 2, 4-gt, 5, genre.
    #[arg(long, default_value = "1,2")]
    pub tables: String,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// Seed for the label mapping behind table 4-gt.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Single,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TextArg {
    Ngram,
    Recurrent,
    Precomputed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageArg {
    None,
    Fixture,
    Precomputed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Paper,
    Desk,
}

impl PresetArg {
    pub fn name(self) -> &'static str {
        match self {
            PresetArg::Paper => "paper",
            PresetArg::Desk => "desk",
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    /// Feature file for precomputed encoders.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// JSON config merged over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub text: Option<TextArg>,
    #[arg(long, value_enum)]
    pub image: Option<ImageArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Also train and score the linear SVM baseline.
    #[arg(long)]
    pub svm: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartArg {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalClassifierArgs {
    /// Checkpoint directory written by train-classifier.
    #[arg(long)]
    pub model: PathBuf,
    /// split.json written by train-classifier.
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub part: PartArg,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelSourceArg {
    /// Mapped human annotations.
    Clue,
    /// Single-label classifier predictions.
    Predicted,
    /// The NONE placeholder everywhere.
    None,
}

#[derive(Debug, Args)]
pub struct TrainCaptionerArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub labels: Option<LabelSourceArg>,
    /// Classifier checkpoint for `--labels predicted`.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Checkpoint directory written by train-captioner.
    #[arg(long)]
    pub model: PathBuf,
    /// Requested relation, or "none".
    #[arg(long, default_value = "none")]
    pub label: String,
    /// Image file for a single generation.
    #[arg(long, conflicts_with = "pairs", required_unless_present = "pairs")]
    pub image: Option<PathBuf>,
    /// Caption TSV whose cached images are captioned in batch.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Beam width; greedy when absent.
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Output file; JSON for a single image, caption TSV in batch mode.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Cider,
    CiderD,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Candidate caption TSV (caption TAB url).
    #[arg(long)]
    pub candidates: PathBuf,
    /// Reference caption TSV; references are matched by image url.
    #[arg(long)]
    pub references: PathBuf,
    #[arg(long, value_enum, default_value = "cider")]
    pub variant: VariantArg,
    #[arg(long)]
    pub out: PathBuf,
}
