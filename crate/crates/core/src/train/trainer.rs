use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::arch::{ModelSpec, DEFAULT_DROPOUT};
use super::loss::bce_loss;
use super::metrics::EpochMetrics;
use crate::error::{Error, Result};
use crate::imgpipe::{Dataset, Preprocessor, Sample, SplitName, SplitRatios, ZcaOptions, DEFAULT_IMAGE_SIZE, RESCALE_FACTOR};
use crate::model::{Model, ModelMeta, DEFAULT_THRESHOLD};
use crate::nn::Network;
use crate::rng::{stream, Rng};
use crate::tensor::{Element, Precision, Tensor};

pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
    /// `(height, width)`; images always have three channels.
    pub image_size: (usize, usize),
    pub dropout: [f32; 2],
    pub split: SplitRatios,
    pub zca: ZcaOptions,
    pub threshold: f32,
    pub precision: Precision,
    /// Run on a single thread so that reruns are bit-identical regardless of
    /// the machine's core count.
    pub strict: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            optimizer: AdamConfig::default(),
            seed: DEFAULT_SEED,
            image_size: DEFAULT_IMAGE_SIZE,
            dropout: DEFAULT_DROPOUT,
            split: SplitRatios::default(),
            zca: ZcaOptions::default(),
            threshold: DEFAULT_THRESHOLD,
            precision: Precision::default(),
            strict: false,
        }
    }
}

impl TrainConfig {
    pub fn input_shape(&self) -> [usize; 3] {
        [self.image_size.0, self.image_size.1, 3]
    }

    /// Pixel rescale applied before normalization.
    pub fn rescale_factor(&self) -> f64 {
        RESCALE_FACTOR
    }

    /// The reference architecture at this config's input size and dropout.
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::reference(self.input_shape(), self.dropout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        let lr = self.optimizer.learning_rate;
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::config(format!("learning rate must be positive, got {lr}")));
        }
        let AdamConfig { beta1, beta2, epsilon, .. } = self.optimizer;
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
            return Err(Error::config("Adam betas must be in [0, 1) and epsilon positive"));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(Error::config("image size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        self.split.validate()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochMetrics>,
    /// Mean loss over the training split before the first update.
    pub initial_train_loss: f64,
    pub warnings: Vec<String>,
}

/// Trains the reference architecture described by `config`.
pub fn train<F>(dataset: &Dataset, config: &TrainConfig, on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochMetrics) + Send,
{
    train_spec(dataset, &config.model_spec(), config, on_epoch)
}

/// Trains an arbitrary spec. `config.image_size` is ignored in favour of the
/// spec's input shape.
pub fn train_spec<F>(dataset: &Dataset, spec: &ModelSpec, config: &TrainConfig, on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochMetrics) + Send,
{
    config.validate()?;
    spec.validate()?;
    let run = || match config.precision {
        Precision::F32 => run::<f32, F>(dataset, spec, config, on_epoch),
        Precision::F64 => run::<f64, F>(dataset, spec, config, on_epoch),
    };
    if config.strict {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(format!("could not start single-threaded pool: {e}")))?
            .install(run)
    } else {
        run()
    }
}

/// Preprocessed samples stored back to back, with labels as scores.
struct Prepared<T> {
    x: Vec<T>,
    y: Vec<T>,
    per_sample: usize,
}

impl<T: Element> Prepared<T> {
    fn new(samples: &[&Sample], pre: &Preprocessor, shape: [usize; 3]) -> Result<Self> {
        let per_sample = shape.iter().product();
        let mut x = Vec::with_capacity(samples.len() * per_sample);
        for s in samples {
            if s.image.shape() != shape {
                return Err(Error::Dimension(format!(
                    "sample {} has shape {:?}, model expects {:?}",
                    s.source,
                    s.image.shape(),
                    shape
                )));
            }
            x.extend(pre.apply(&s.image)?.data().iter().map(|&v| T::of_f64(f64::from(v))));
        }
        let y = samples.iter().map(|s| T::of_f64(f64::from(s.label))).collect();
        Ok(Prepared { x, y, per_sample })
    }

    fn len(&self) -> usize {
        self.y.len()
    }

    fn batch(&self, indices: &[usize], shape: [usize; 3]) -> Result<(Tensor<T>, Vec<T>)> {
        let mut x = Vec::with_capacity(indices.len() * self.per_sample);
        for &i in indices {
            x.extend_from_slice(&self.x[i * self.per_sample..(i + 1) * self.per_sample]);
        }
        let y = indices.iter().map(|&i| self.y[i]).collect();
        Ok((Tensor::new(&[indices.len(), shape[0], shape[1], shape[2]], x)?, y))
    }
}

fn correct<T: Element>(scores: &[T], labels: &[T], threshold: T) -> usize {
    scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| (s >= threshold) == (y == T::one()))
        .count()
}

/// Inference-mode mean loss and accuracy over a prepared set.
fn assess<T: Element>(
    net: &Network<T>,
    data: &Prepared<T>,
    shape: [usize; 3],
    batch_size: usize,
    threshold: T,
) -> Result<(f64, f64)> {
    let all: Vec<usize> = (0..data.len()).collect();
    let (mut loss_sum, mut hits) = (0.0, 0);
    for idx in all.chunks(batch_size) {
        let (x, y) = data.batch(idx, shape)?;
        let scores = net.predict(&x)?;
        loss_sum += bce_loss(&scores, &y)?.0 * idx.len() as f64;
        hits += correct(&scores, &y, threshold);
    }
    Ok((loss_sum / data.len() as f64, hits as f64 / data.len() as f64))
}

fn run<T: Element, F>(dataset: &Dataset, spec: &ModelSpec, config: &TrainConfig, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochMetrics),
{
    let train_set = dataset.subset(SplitName::Train);
    let val_set = dataset.subset(SplitName::Val);
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::config(format!(
            "training needs nonempty train and validation splits (got {} and {})",
            train_set.len(),
            val_set.len()
        )));
    }
    let shape = spec.input_shape;
    let images: Vec<&Tensor<f32>> = train_set.iter().map(|s| &s.image).collect();
    let (pre, warnings) = Preprocessor::fit(&images, &config.zca)?;
    let train_data = Prepared::<T>::new(&train_set, &pre, shape)?;
    let val_data = Prepared::<T>::new(&val_set, &pre, shape)?;

    let rng = Rng::new(config.seed);
    let mut net: Network<T> = spec.build(&rng)?;
    let mut opt = Adam::new(config.optimizer, &net);
    let threshold = T::of_f64(f64::from(config.threshold));
    let (initial_train_loss, _) = assess(&net, &train_data, shape, config.batch_size, threshold)?;

    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        rng.substream(&[stream::SHUFFLE, epoch as u64]).shuffle(&mut order);
        let (mut loss_sum, mut hits) = (0.0, 0);
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = train_data.batch(idx, shape)?;
            let dropout_rng = rng.substream(&[stream::DROPOUT, epoch as u64, b as u64]);
            let scores = net.forward_train(&x, &dropout_rng)?;
            let diverged = Error::Diverged { epoch, batch: b + 1 };
            if scores.data().iter().any(|s| !s.is_finite()) {
                return Err(diverged);
            }
            let (loss, grad) = bce_loss(scores.data(), &y)?;
            if !loss.is_finite() {
                return Err(diverged);
            }
            loss_sum += loss * idx.len() as f64;
            hits += correct(scores.data(), &y, threshold);
            net.backward_params(&Tensor::new(&[idx.len(), 1], grad)?)?;
            opt.step(&mut net)?;
        }
        let (val_loss, val_acc) = assess(&net, &val_data, shape, config.batch_size, threshold)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / train_data.len() as f64,
            acc: hits as f64 / train_data.len() as f64,
            val_loss,
            val_acc,
        };
        tracing::debug!(?metrics, "epoch finished");
        on_epoch(&metrics);
        history.push(metrics);
    }

    let net: Network<f32> = net.cast();
    let meta = ModelMeta {
        class_names: dataset.class_names.clone(),
        threshold: config.threshold,
        version: run_version(dataset, config, &net)?,
        seed: config.seed,
    };
    Ok(TrainOutcome {
        model: Model::new(net, pre, meta)?,
        history,
        initial_train_loss,
        warnings,
    })
}

/// `s{seed}-{hash}` where the hash covers the data, the resolved config and
/// the trained weights, so two artifacts share a version only if they are
/// the same model.
fn run_version(dataset: &Dataset, config: &TrainConfig, net: &Network<f32>) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(dataset.fingerprint().as_bytes());
    // strict only picks the thread count, which never changes the weights
    h.update(serde_json::to_vec(&TrainConfig { strict: false, ..config.clone() })?);
    for layer in net.layers() {
        for p in layer.params() {
            for v in p.data() {
                h.update(v.to_le_bytes());
            }
        }
    }
    let hex: String = h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect();
    Ok(format!("s{}-{hex}", config.seed))
}
