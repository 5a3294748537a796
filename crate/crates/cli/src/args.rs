use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use xmodal_core::{ClassWeightMode, EncoderKind, FusionKind};

#[derive(Debug, Parser)]
#[command(name = "xmodal", version, about = "Bimodal text + audio emotion classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (train/, validation/, test/ and provenance.json).
    Generate(GenerateArgs),
    /// Train a model; writes checkpoint/, history.jsonl and config.json.
    Train(TrainArgs),
    /// Score a checkpoint on one split; writes report.txt, report.json and confusion.csv.
    Evaluate(EvaluateArgs),
    /// Finite-difference check of every layer and both architectures in f64.
    Gradcheck(GradcheckArgs),
    /// Check split sizes, label coverage and id uniqueness of a dataset directory.
    Validate(ValidateArgs),
    /// Render a saved report.json as a table or confusion CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory, created if missing.
    #[arg(long, short)]
    pub out: PathBuf,
    /// JSON generator settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 256]
    #[arg(long)]
    pub n_train: Option<usize>,
    /// [default: 64]
    #[arg(long)]
    pub n_validation: Option<usize>,
    /// [default: 64]
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Feature width [default: 768]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Text sequence length [default: 3]
    #[arg(long)]
    pub text_len: Option<usize>,
    /// Audio sequence length [default: 5]
    #[arg(long)]
    pub audio_len: Option<usize>,
    /// Seven comma-separated class probabilities in label order
    /// (anger,disgust,fear,joy,neutral,sadness,surprise) [default: uniform]
    #[arg(long, value_delimiter = ',')]
    pub priors: Option<Vec<f64>>,
    /// Fraction of records whose label needs both modalities [default: 0]
    #[arg(long)]
    pub interaction_strength: Option<f64>,
    /// Gaussian noise on each feature [default: 0.3]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Scale of the class prototypes [default: 1]
    #[arg(long)]
    pub separation: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FusionArg {
    Concat,
    CrossAttention,
}

impl From<FusionArg> for FusionKind {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Concat => FusionKind::Concat,
            FusionArg::CrossAttention => FusionKind::CrossAttention,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightsArg {
    Uniform,
    InverseFrequency,
}

impl From<WeightsArg> for ClassWeightMode {
    fn from(w: WeightsArg) -> Self {
        match w {
            WeightsArg::Uniform => ClassWeightMode::Uniform,
            WeightsArg::InverseFrequency => ClassWeightMode::InverseFrequency,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EncoderArg {
    FileBacked,
    ToyTransformer,
}

impl From<EncoderArg> for EncoderKind {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::FileBacked => EncoderKind::FileBacked,
            EncoderArg::ToyTransformer => EncoderKind::ToyTransformer,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run config ({"model": {...}, "train": {...}, "data": ..., "out": ...}); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory with train/ and validation/ [default: data]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory [default: runs/latest]
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Fusion layer [default: cross-attention]
    #[arg(long, value_enum)]
    pub fusion: Option<FusionArg>,
    /// Attention heads [default: 128]
    #[arg(long)]
    pub heads: Option<usize>,
    /// Model width; must match the dataset feature width [default: 768]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Padded text length [default: longest text sequence in the dataset]
    #[arg(long)]
    pub text_len: Option<usize>,
    /// Padded audio length [default: longest audio sequence in the dataset]
    #[arg(long)]
    pub audio_len: Option<usize>,
    /// AdamW learning rate [default: 5e-8]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: 2]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// [default: 0.1]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// AdamW decoupled weight decay [default: 0.01]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Evaluations without improvement before stopping [default: 1]
    #[arg(long)]
    pub patience: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Validate every N epochs and after the last [default: 1]
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Loss weighting [default: inverse-frequency]
    #[arg(long, value_enum)]
    pub class_weights: Option<WeightsArg>,
    /// Seeds initialisation, shuffling and dropout [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Update encoder parameters [default: true]
    #[arg(long)]
    pub train_encoders: Option<bool>,
    /// Encoder backend for both modalities [default: file-backed]
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderArg>,
    /// Blocks in the toy-transformer encoder [default: 2]
    #[arg(long)]
    pub encoder_depth: Option<usize>,
    /// Mask padded key positions in attention [default: false]
    #[arg(long)]
    pub mask_padding: Option<bool>,
    /// Truncate text longer than the audio length instead of failing [default: false]
    #[arg(long)]
    pub truncate: Option<bool>,
    /// Width of an extra linear layer before the classifier [default: none]
    #[arg(long)]
    pub hidden_head_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split directory to score (e.g. data/test).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Seeds the random inputs and parameter perturbations [default: 0]
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add a component with a deliberately wrong gradient rule.
    #[arg(long, hide = true)]
    pub inject_corrupted: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Dataset directory with train/, validation/ and test/.
    #[arg(long)]
    pub data: PathBuf,
    /// Exit 1 when any violation is found.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json written by `evaluate`.
    #[arg(long)]
    pub input: PathBuf,
    /// Print the row-normalised confusion matrix as CSV instead of the table.
    #[arg(long)]
    pub confusion: bool,
}
