use std::path::PathBuf;

use aedes_core::imgpipe::SplitRatios;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Mosquito species classifier: synthesize data, train, evaluate, predict and serve.
///
/// Flags are the only source of configuration; environment variables are
/// never consulted. JSON results go to stdout, progress and diagnostics to
/// stderr.
#[derive(Debug, Parser)]
#[command(name = "aedes", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Seed for every random choice (split, init, dropout, shuffling, synthesis).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Single-threaded, bit-reproducible execution.
    #[arg(long, global = true)]
    pub strict: bool,

    /// Only print warnings and errors on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write the artifact, metrics and run manifest.
    Train(TrainArgs),
    /// Score a labelled dataset with a trained model.
    Evaluate(EvaluateArgs),
    /// Classify image files, one JSON line per image.
    Predict(PredictArgs),
    /// Re-validate a model artifact and write it to a new path.
    Export(ExportArgs),
    /// Serve a model over HTTP.
    Serve(ServeArgs),
    /// Write a synthetic two-class image dataset to disk.
    Synth(SynthArgs),
    /// Describe a model artifact: header, layer records, checksum.
    #[command(visible_alias = "dump")]
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct DataSource {
    /// Dataset root with one subdirectory per class.
    #[arg(long, required_unless_present = "synthetic")]
    pub data: Option<PathBuf>,

    /// Generate the dataset in memory instead of reading one.
    #[arg(long, conflicts_with = "data")]
    pub synthetic: bool,

    /// Images per class for --synthetic.
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_per_class: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: DataSource,

    /// Start from the config recorded in a run manifest (or a bare config file);
    /// explicit flags still win.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,

    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: Option<u64>,

    /// Adam learning rate.
    #[arg(long, value_parser = positive_f64)]
    pub lr: Option<f64>,

    /// `N` for square images or `HxW`.
    #[arg(long, value_parser = parse_image_size)]
    pub image_size: Option<(usize, usize)>,

    /// Fit and apply ZCA whitening.
    #[arg(long)]
    pub zca: bool,

    #[arg(long, value_parser = positive_f64)]
    pub zca_epsilon: Option<f64>,

    /// Train/val/test fractions, e.g. `0.7,0.2,0.1`.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<SplitRatios>,

    #[arg(long, value_parser = parse_threshold)]
    pub threshold: Option<f32>,

    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,

    /// Output directory.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum SubsetArg {
    Train,
    Val,
    Test,
    #[default]
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,

    #[command(flatten)]
    pub source: DataSource,

    /// Which part of the split to score. Use the training seed and --split to
    /// recover the same partition.
    #[arg(long, value_enum, default_value_t = SubsetArg::All)]
    pub subset: SubsetArg,

    #[arg(long, value_parser = parse_split)]
    pub split: Option<SplitRatios>,

    #[arg(long, value_parser = parse_threshold)]
    pub threshold: Option<f32>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,

    #[arg(long, value_parser = parse_threshold)]
    pub threshold: Option<f32>,

    #[arg(required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,

    #[arg(long)]
    pub out: PathBuf,

    /// Bake a different decision threshold into the exported copy.
    #[arg(long, value_parser = parse_threshold)]
    pub threshold: Option<f32>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,

    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,

    #[arg(long, value_parser = parse_threshold)]
    pub threshold: Option<f32>,

    /// `*` for any origin, a comma-separated origin list, or an empty string to disable.
    #[arg(long, default_value = "*")]
    pub cors: String,

    #[arg(long, default_value_t = aedes_service::DEFAULT_MAX_UPLOAD_BYTES)]
    pub max_upload_bytes: usize,

    #[arg(long, default_value_t = aedes_service::DEFAULT_REQUEST_TIMEOUT.as_secs(), value_parser = clap::value_parser!(u64).range(1..))]
    pub timeout_secs: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_per_class: u64,

    #[arg(long, value_parser = parse_image_size, default_value = "64")]
    pub image_size: (usize, usize),
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("must be a positive number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_threshold(s: &str) -> Result<f32, String> {
    match s.parse::<f32>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        Ok(v) => Err(format!("must lie in [0, 1], got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

pub fn parse_image_size(s: &str) -> Result<(usize, usize), String> {
    let dims: Vec<&str> = s.split(['x', 'X']).collect();
    let parsed: Result<Vec<usize>, _> = dims.iter().map(|d| d.trim().parse::<usize>()).collect();
    match parsed.map_err(|e| e.to_string())?.as_slice() {
        [n] if *n > 0 => Ok((*n, *n)),
        [h, w] if *h > 0 && *w > 0 => Ok((*h, *w)),
        _ => Err(format!("expected N or HxW with positive sides, got {s:?}")),
    }
}

pub fn parse_split(s: &str) -> Result<SplitRatios, String> {
    let parts: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
    let ratios = match parts.map_err(|e| e.to_string())?.as_slice() {
        [train, val, test] => SplitRatios {
            train: *train,
            val: *val,
            test: *test,
        },
        [train, val] => SplitRatios {
            train: *train,
            val: *val,
            test: 0.0,
        },
        _ => return Err(format!("expected TRAIN,VAL[,TEST], got {s:?}")),
    };
    ratios.validate().map_err(|e| e.to_string())?;
    Ok(ratios)
}
