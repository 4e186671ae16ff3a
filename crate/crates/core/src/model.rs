//! A trained classifier: network, fitted preprocessing and metadata.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgpipe::{prepare_image, Preprocessor};
use crate::nn::{Layer, Network};
use crate::tensor::Tensor;
use crate::train::ModelSpec;

/// Score threshold separating class 0 (below) from class 1 (at or above).
pub const DEFAULT_THRESHOLD: f32 = 0.5;

/// Images scored per forward pass when classifying many at once.
const SCORE_CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub class_names: Vec<String>,
    pub threshold: f32,
    pub version: String,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Model {
    network: Network<f32>,
    preprocessor: Preprocessor,
    meta: ModelMeta,
}

impl Model {
    pub fn new(network: Network<f32>, preprocessor: Preprocessor, meta: ModelMeta) -> Result<Self> {
        let input = network.input_shape();
        let &[h, w, c] = input else {
            return Err(Error::config(format!("model input must be (H, W, C), got {input:?}")));
        };
        if c != 3 {
            return Err(Error::config(format!("model input must have 3 channels, got {c}")));
        }
        if !matches!(network.layers().last(), Some(Layer::Sigmoid(_))) || network.output_shape() != [1] {
            return Err(Error::config("model must end in a single sigmoid unit"));
        }
        if preprocessor.norm.channels() != c {
            return Err(Error::config(format!(
                "normalization has {} channels, model expects {c}",
                preprocessor.norm.channels()
            )));
        }
        if let Some(z) = &preprocessor.zca {
            if z.dim() != h * w * c {
                return Err(Error::config(format!(
                    "ZCA dimension {} does not match input {h}x{w}x{c}",
                    z.dim()
                )));
            }
        }
        if meta.class_names.len() != 2 {
            return Err(Error::config(format!("expected 2 class names, got {}", meta.class_names.len())));
        }
        if !(0.0..=1.0).contains(&meta.threshold) {
            return Err(Error::config(format!("threshold {} outside [0, 1]", meta.threshold)));
        }
        Ok(Model {
            network,
            preprocessor,
            meta,
        })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn preprocessor(&self) -> &Preprocessor {
        &self.preprocessor
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn set_threshold(&mut self, threshold: f32) -> Result<()> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::config(format!("threshold {threshold} outside [0, 1]")));
        }
        self.meta.threshold = threshold;
        Ok(())
    }

    pub fn set_version(&mut self, version: impl Into<String>) {
        self.meta.version = version.into();
    }

    pub fn input_shape(&self) -> [usize; 3] {
        let s = self.network.input_shape();
        [s[0], s[1], s[2]]
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            input_shape: self.input_shape(),
            layers: self.network.specs(),
        }
    }

    /// Class index for a score: `score >= threshold` is class 1.
    pub fn class_index(&self, score: f32) -> usize {
        usize::from(score >= self.meta.threshold)
    }

    pub fn label(&self, score: f32) -> &str {
        &self.meta.class_names[self.class_index(score)]
    }

    /// Scores images that are already resized and rescaled to `[0, 1]`.
    pub fn score_images(&self, images: &[&Tensor<f32>]) -> Result<Vec<f32>> {
        let [h, w, c] = self.input_shape();
        let per = h * w * c;
        let mut scores = Vec::with_capacity(images.len());
        for chunk in images.chunks(SCORE_CHUNK) {
            let mut data = Vec::with_capacity(chunk.len() * per);
            for img in chunk {
                if img.shape() != [h, w, c] {
                    return Err(Error::dim(format!(
                        "image shape {:?} does not match model input {:?}",
                        img.shape(),
                        [h, w, c]
                    )));
                }
                data.extend_from_slice(self.preprocessor.apply(img)?.data());
            }
            let batch = Tensor::new(&[chunk.len(), h, w, c], data)?;
            scores.extend(self.network.predict(&batch)?);
        }
        Ok(scores)
    }

    /// Decodes, resizes and rescales encoded image bytes for this model.
    /// Returns the image and any notes about channel conversion.
    pub fn prepare(&self, bytes: &[u8]) -> Result<(Tensor<f32>, Vec<String>)> {
        let [h, w, _] = self.input_shape();
        let decoded = prepare_image(bytes, (h, w))?;
        Ok((decoded.pixels, decoded.notes))
    }
}
