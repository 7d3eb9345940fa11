use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gnetdet_core::detect::DecodeConfig;
use gnetdet_core::eval::ApMethod;
use gnetdet_core::io::{ChannelMode, PreprocessOptions};
use gnetdet_core::Exec;

#[derive(Debug, Parser)]
#[command(
    name = "gnetdet",
    version,
    about = "Validate, build, run and measure GnetDet/GnetFC models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model config against the chip rules.
    Validate(ValidateArgs),
    /// Write a canonical model config and seeded random weights.
    Init(InitArgs),
    /// Detect objects in one image or a directory of images.
    Detect(DetectArgs),
    /// Print the top-k classes of an image.
    Classify(ClassifyArgs),
    /// Score detections against ground truth (per-class AP and mAP).
    Eval(EvalArgs),
    /// Time the detection pipeline stage by stage.
    Bench(BenchArgs),
    /// Convert VOC XML annotations to ground-truth lines.
    ConvertVoc(ConvertVocArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Model config file.
    pub config: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    GnetdetLarge,
    GnetdetSmall,
    GnetfcV1,
    GnetfcV2,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long, value_enum)]
    pub arch: Arch,
    /// Input resolution (GnetFC models take 224 only).
    #[arg(long, default_value_t = 224)]
    pub size: usize,
    /// Input channel format; y gives one input channel, rgb and yuv give three.
    #[arg(long, default_value = "y", value_parser = parse_mode)]
    pub mode: ChannelMode,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    /// Seed for the random weights.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// GnetFC-v2 output grid (7 or 14).
    #[arg(long, default_value_t = 7)]
    pub grid: usize,
    /// GnetFC width: backbone width for v1, output channels for v2.
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    /// Chip channel budget.
    #[arg(long, default_value_t = 512)]
    pub max_width: usize,
    /// Apply ReLU after the final sublayer as well.
    #[arg(long)]
    pub head_relu: bool,
    /// Output config path.
    #[arg(long)]
    pub config: PathBuf,
    /// Output weight path.
    #[arg(long)]
    pub weights: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Input channel format; defaults to y for one input channel and rgb for three.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ChannelMode>,
    /// Input samples are divided by this before the forward pass.
    #[arg(long, default_value_t = 255.0)]
    pub divisor: f32,
    /// Parallelism inside the forward pass and NMS.
    #[arg(long, default_value = "sequential", value_parser = parse_exec)]
    pub exec: Exec,
}

impl ModelArgs {
    pub fn preprocess_options(&self) -> PreprocessOptions {
        PreprocessOptions {
            divisor: self.divisor,
        }
    }
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Minimum box confidence.
    #[arg(long = "conf", default_value_t = DecodeConfig::default().confidence_threshold)]
    pub confidence: f32,
    /// Minimum confidence times class probability.
    #[arg(long = "score", default_value_t = DecodeConfig::default().score_threshold)]
    pub score: f32,
    /// NMS suppresses same-class boxes with IoU above this.
    #[arg(long = "nms", default_value_t = DecodeConfig::default().nms_iou_threshold)]
    pub nms: f32,
}

impl ThresholdArgs {
    pub fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            confidence_threshold: self.confidence,
            score_threshold: self.score,
            nms_iou_threshold: self.nms,
        }
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// Class name file, one per line (defaults to the 20 VOC classes).
    #[arg(long)]
    pub names: Option<PathBuf>,
    /// Detection output: a file for one image, a directory of <image_id>.txt for a directory.
    /// Without it, lines go to stdout (prefixed by image id for a directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rendered PPM output: a file for one image, a directory for a directory.
    #[arg(long)]
    pub render: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    /// A PPM/PGM image or a directory of them.
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    pub image: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Image-prefixed detection file or directory of <image_id>.txt files.
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// 11point or continuous.
    #[arg(long, default_value = "11point", value_parser = parse_method)]
    pub method: ApMethod,
    #[arg(long)]
    pub names: Option<PathBuf>,
    #[arg(long, default_value = "sequential", value_parser = parse_exec)]
    pub exec: Exec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Kv,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Use a mid-gray frame at the model's input size instead of image files.
    #[arg(long)]
    pub synthetic: bool,
    /// PPM/PGM images or directories of them.
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertVocArgs {
    /// Directory of VOC XML annotations (image id = file stem).
    pub xml_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub names: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

fn parse_mode(s: &str) -> Result<ChannelMode, String> {
    s.parse()
}

fn parse_exec(s: &str) -> Result<Exec, String> {
    s.parse()
}

fn parse_method(s: &str) -> Result<ApMethod, String> {
    s.parse()
}
