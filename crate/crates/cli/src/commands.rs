use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use aedes_core::imgpipe::{
    generate_synthetic_dataset, load_dataset, synthesize_images, write_synthetic_images, Dataset, SplitName,
    SplitRatios, SYNTHETIC_CLASS_DIRS,
};
use aedes_core::modelfmt;
use aedes_core::train::{evaluate, save_history, train, TrainConfig, DEFAULT_SEED};
use aedes_core::{classify, Error, Model, Precision, Rng};
use aedes_service::{CorsPolicy, ServiceConfig};
use serde::Serialize;
use serde_json::json;
use tracing::{info, warn};

use crate::args::{
    DataSource, EvaluateArgs, ExportArgs, InspectArgs, PrecisionArg, PredictArgs, ServeArgs, SubsetArg, SynthArgs,
    TrainArgs,
};
use crate::manifest::{read_config, Artifacts, DatasetInfo, DatasetSource, RunManifest};

pub const MODEL_FILE: &str = "model.aedes";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or an impossible configuration: exit 2.
    Usage(String),
    /// Anything that went wrong while doing the work: exit 1.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<aedes_service::ServiceError> for Failure {
    fn from(e: aedes_service::ServiceError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub type Outcome = Result<(), Failure>;

/// Flags shared by every subcommand.
#[derive(Clone, Copy, Debug)]
pub struct Globals {
    pub seed: Option<u64>,
    pub strict: bool,
}

impl Globals {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

/// Writes one JSON document as a single stdout line.
fn emit(value: &impl Serialize) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(|e| Failure::Runtime(format!("writing output: {e}")))?;
    writeln!(out).and_then(|()| out.flush())?;
    Ok(())
}

fn load_data(source: &DataSource, size: (usize, usize), split: SplitRatios, seed: u64) -> Result<(Dataset, DatasetSource, usize), Failure> {
    let rng = Rng::new(seed);
    match &source.data {
        Some(root) => {
            let (ds, report) = load_dataset(root, size, split, &rng)?;
            for class in &report.classes {
                for skipped in &class.skipped {
                    warn!(path = %skipped.path.display(), reason = %skipped.reason, "skipped file");
                }
            }
            info!(loaded = report.total_loaded(), skipped = report.total_skipped(), root = %root.display(), "dataset loaded");
            Ok((ds, DatasetSource::Directory { path: root.clone() }, report.total_skipped()))
        }
        None => {
            let n = usize::try_from(source.n_per_class).map_err(|_| Failure::Usage("--n-per-class too large".into()))?;
            let ds = generate_synthetic_dataset(n, size, &rng, split)?;
            info!(images = ds.len(), "synthetic dataset generated");
            Ok((ds, DatasetSource::Synthetic { n_per_class: n }, 0))
        }
    }
}

pub fn resolve_train_config(args: &TrainArgs, globals: Globals) -> Result<TrainConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => read_config(path).map_err(Failure::Usage)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = args.epochs {
        config.epochs = e as usize;
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b as usize;
    }
    if let Some(lr) = args.lr {
        config.optimizer.learning_rate = lr;
    }
    if let Some(seed) = globals.seed {
        config.seed = seed;
    }
    if let Some(size) = args.image_size {
        config.image_size = size;
    }
    if args.zca {
        config.zca.enabled = true;
    }
    if let Some(eps) = args.zca_epsilon {
        config.zca.epsilon = eps;
    }
    if let Some(split) = args.split {
        config.split = split;
    }
    if let Some(t) = args.threshold {
        config.threshold = t;
    }
    if let Some(p) = args.precision {
        config.precision = match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        };
    }
    config.strict |= globals.strict;
    config.validate()?;
    config.model_spec().validate()?;
    Ok(config)
}

pub fn train_cmd(args: TrainArgs, globals: Globals) -> Outcome {
    let config = resolve_train_config(&args, globals)?;
    let (dataset, source, skipped) = load_data(&args.source, config.image_size, config.split, config.seed)?;
    std::fs::create_dir_all(&args.out)?;

    let epochs = config.epochs;
    let outcome = train(&dataset, &config, |m| {
        info!(
            "epoch {:>3}/{epochs}  loss {:.4}  acc {:.4}  val_loss {:.4}  val_acc {:.4}",
            m.epoch, m.train_loss, m.acc, m.val_loss, m.val_acc
        );
    })?;
    for w in &outcome.warnings {
        warn!("{w}");
    }

    let model_path = args.out.join(MODEL_FILE);
    let bytes = modelfmt::save_model(&outcome.model, &model_path)?;
    save_history(&outcome.history, &args.out.join(METRICS_CSV), &args.out.join(METRICS_JSON))?;

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        dataset: DatasetInfo {
            source,
            count: dataset.len(),
            train: dataset.split.train.len(),
            val: dataset.split.val.len(),
            test: dataset.split.test.len(),
            skipped,
            fingerprint: dataset.fingerprint(),
        },
        artifacts: Artifacts {
            model: MODEL_FILE.into(),
            model_bytes: bytes,
            model_version: outcome.model.meta().version.clone(),
            metrics_csv: METRICS_CSV.into(),
            metrics_json: METRICS_JSON.into(),
        },
        initial_train_loss: outcome.initial_train_loss,
        final_epoch: outcome.history.last().cloned(),
        config,
    };
    let manifest_path = manifest.write(&args.out)?;
    info!(model = %model_path.display(), bytes, "model written");

    emit(&json!({
        "model": model_path,
        "manifest": manifest_path,
        "model_version": manifest.artifacts.model_version,
        "epochs": outcome.history.len(),
        "final": manifest.final_epoch,
    }))?;
    Ok(())
}

fn load_model_with(path: &Path, threshold: Option<f32>) -> Result<Model, Failure> {
    Ok(aedes_service::load_model(path, threshold)?)
}

pub fn evaluate_cmd(args: EvaluateArgs, globals: Globals) -> Outcome {
    let model = load_model_with(&args.model, args.threshold)?;
    let [h, w, _] = model.input_shape();
    let split = args.split.unwrap_or_default();
    let (dataset, _, _) = load_data(&args.source, (h, w), split, globals.seed())?;
    let (subset, name) = match args.subset {
        SubsetArg::All => (dataset.samples.iter().collect::<Vec<_>>(), "all"),
        SubsetArg::Train => (dataset.subset(SplitName::Train), "train"),
        SubsetArg::Val => (dataset.subset(SplitName::Val), "val"),
        SubsetArg::Test => (dataset.subset(SplitName::Test), "test"),
    };
    let eval = evaluate(&model, &subset)?;
    info!(subset = name, count = eval.count, accuracy = eval.accuracy, "evaluated");
    emit(&json!({
        "model_version": model.meta().version,
        "subset": name,
        "threshold": model.meta().threshold,
        "count": eval.count,
        "accuracy": eval.accuracy,
        "confusion": eval.confusion,
    }))?;
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    path: &'a Path,
    score: f64,
    label: &'a str,
}

pub fn predict_cmd(args: PredictArgs, _globals: Globals) -> Outcome {
    let model = load_model_with(&args.model, args.threshold)?;
    let mut failed = 0usize;
    for path in &args.images {
        let result = std::fs::read(path)
            .map_err(|e| e.to_string())
            .and_then(|bytes| classify(&model, &bytes).map_err(|e| e.to_string()));
        match result {
            Ok(r) => {
                for w in &r.warnings {
                    warn!(path = %path.display(), "{w}");
                }
                emit(&Prediction {
                    path,
                    score: r.score,
                    label: &r.label,
                })?;
            }
            Err(e) => {
                failed += 1;
                warn!(path = %path.display(), "{e}");
                emit(&json!({ "path": path, "error": e }))?;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} of {} images could not be classified", args.images.len())));
    }
    Ok(())
}

pub fn export_cmd(args: ExportArgs, _globals: Globals) -> Outcome {
    let model = load_model_with(&args.model, args.threshold)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let bytes = modelfmt::save_model(&model, &args.out)?;
    emit(&json!({
        "path": args.out,
        "bytes": bytes,
        "model_version": model.meta().version,
        "threshold": model.meta().threshold,
    }))?;
    Ok(())
}

pub fn inspect_cmd(args: InspectArgs, _globals: Globals) -> Outcome {
    let bytes = std::fs::read(&args.model)?;
    let layout = modelfmt::dump(&bytes)?;
    let model = modelfmt::from_bytes(&bytes)?;
    emit(&json!({
        "path": args.model,
        "bytes": bytes.len(),
        "layout": layout.lines().collect::<Vec<_>>(),
        "model": aedes_service::model_info(&model),
    }))?;
    Ok(())
}

pub fn synth_cmd(args: SynthArgs, globals: Globals) -> Outcome {
    let n = usize::try_from(args.n_per_class).map_err(|_| Failure::Usage("--n-per-class too large".into()))?;
    let images = synthesize_images(n, args.image_size, &Rng::new(globals.seed()))?;
    let paths = write_synthetic_images(&args.out, &images)?;
    info!(count = paths.len(), root = %args.out.display(), "synthetic images written");
    emit(&json!({
        "root": args.out,
        "count": paths.len(),
        "classes": { SYNTHETIC_CLASS_DIRS[0]: n, SYNTHETIC_CLASS_DIRS[1]: n },
        "image_size": [args.image_size.0, args.image_size.1],
        "seed": globals.seed(),
    }))?;
    Ok(())
}

pub fn serve_cmd(args: ServeArgs, globals: Globals) -> Outcome {
    let model = load_model_with(&args.model, args.threshold)?;
    let config = ServiceConfig {
        max_upload_bytes: args.max_upload_bytes,
        request_timeout: std::time::Duration::from_secs(args.timeout_secs),
        cors: CorsPolicy::parse(&args.cors),
        max_concurrent_inferences: globals.strict.then_some(1),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&args.bind)
            .await
            .map_err(|e| Failure::Runtime(format!("could not bind {}: {e}", args.bind)))?;
        let local = listener.local_addr()?;
        info!(address = %local, version = %model.meta().version, "serving");
        emit(&json!({ "listening": local.to_string(), "model_version": model.meta().version }))?;
        aedes_service::serve_on(listener, Arc::new(model), config, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}
