//! `cohere`: generate or ingest frame corpora, train encoders without
//! labels, dump embeddings, score clustering-based discovery and compare
//! fine-tuning initializations.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 for runtime or numerical
//! failures. `COHERE_THREADS` caps the worker pool.

mod commands;
mod run_manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cohere::discovery::{Algorithm, SigmaMode};
use cohere::encoder::Tap;
use cohere::trainer::Mode;
use cohere::videoset::{FrameFormat, FrameShape};

#[derive(Debug, Parser)]
#[command(name = "cohere", version, about = "Temporal-coherence representation learning from unlabeled video")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labeled corpus of moving shapes.
    Gen(GenArgs),
    /// Train an encoder on an unlabeled corpus.
    Train(TrainArgs),
    /// Write per-frame embeddings of a corpus as a CEMB1 dump.
    Embed(EmbedArgs),
    /// Cluster embeddings and score them against ground-truth labels.
    Eval(EvalArgs),
    /// Fine-tune a classifier from few labeled frames.
    Finetune(FinetuneArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 4)]
    pub per_class: usize,
    /// Frames per video.
    #[arg(long, default_value_t = 30)]
    pub len: usize,
    /// Frame shape as CxHxW.
    #[arg(long, default_value = "1x16x16")]
    pub shape: FrameShape,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Non-neighbor offset the corpus must support (videos need n + 2 frames).
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Frame file format: cfr or pnm.
    #[arg(long, default_value = "cfr")]
    pub format: FrameFormat,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus manifest.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for encoder.cenc, train_report.json and run.json.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// siamese, quadruplet or sfa.
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Tuples sampled per epoch.
    #[arg(long)]
    pub tuples: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    /// Weight-decay coefficient.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Learning-rate decay factor.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Epochs between learning-rate drops.
    #[arg(long)]
    pub lr_step: Option<usize>,
    #[arg(long)]
    pub batch_pairs: Option<usize>,
    #[arg(long)]
    pub batch_quads: Option<usize>,
    #[arg(long)]
    pub w: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub positive_fraction: Option<f64>,
    /// Minimum anchor/negative gap when training on a concatenated video.
    #[arg(long)]
    pub mu_gap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Concatenate all videos into one long video before training.
    #[arg(long)]
    pub mu: bool,
    /// Architecture string, e.g. "1x16x16 conv8k3p1 relu pool2 dense64".
    #[arg(long, conflicts_with = "embedding_dim")]
    pub arch: Option<String>,
    /// Width of the default architecture's final layer.
    #[arg(long)]
    pub embedding_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// penultimate or final.
    #[arg(long, default_value = "penultimate")]
    pub tap: Tap,
    /// Store ground-truth class ids in the dump (otherwise -1).
    #[arg(long)]
    pub with_labels: bool,
    /// Output dump path; a `.run.json` manifest is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, requires = "corpus", conflicts_with = "embeddings")]
    pub checkpoint: Option<PathBuf>,
    /// Labeled test corpus manifest.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// A labeled CEMB1 dump instead of checkpoint + corpus.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// kmeans or spectral.
    #[arg(long, default_value = "kmeans")]
    pub algo: Algorithm,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "penultimate")]
    pub tap: Tap,
    /// Gaussian kernel width: median or a number.
    #[arg(long, default_value = "median")]
    pub sigma: SigmaMode,
    /// Score per video by majority vote instead of per frame.
    #[arg(long)]
    pub per_video: bool,
    /// Cluster only this many frames.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long, default_value_t = cohere::discovery::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    /// Report path; a `.run.json` manifest is written beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Labeled corpus manifest.
    #[arg(long)]
    pub corpus: PathBuf,
    /// A checkpoint path, or "random".
    #[arg(long)]
    pub init: String,
    /// Also run a random-init arm on the same seeds and report the uplift.
    #[arg(long)]
    pub compare: bool,
    /// Number of paired seeds, starting at --seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Labeled training frames per class; all other frames are held out.
    #[arg(long, default_value_t = 5)]
    pub per_class: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    pub lambda: f64,
    #[arg(long, default_value_t = 5)]
    pub batch: usize,
    #[arg(long)]
    pub freeze_encoder: bool,
    #[arg(long, default_value = "penultimate")]
    pub tap: Tap,
    /// Architecture for --init random.
    #[arg(long, conflicts_with = "embedding_dim")]
    pub arch: Option<String>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// Report path; a `.run.json` manifest is written beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// An invalid combination of command-line inputs.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<cohere::Error>() {
            return if e.is_validation() { 2 } else { 3 };
        }
        if cause.is::<Usage>() {
            return 2;
        }
    }
    3
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(value) = std::env::var("COHERE_THREADS") {
        let n: usize = value
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Usage(format!("COHERE_THREADS must be a positive integer, got {value:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = configure_threads().and_then(|()| match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train(a),
        Command::Embed(a) => commands::embed(a),
        Command::Eval(a) => commands::eval(a),
        Command::Finetune(a) => commands::finetune(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
