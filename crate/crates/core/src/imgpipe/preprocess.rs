use serde::{Deserialize, Serialize};

use super::normalize::NormStats;
use super::zca::{ZcaTransform, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest flattened image size ZCA will be fitted for (`d x d` matrix).
pub const DEFAULT_ZCA_MAX_DIM: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZcaOptions {
    pub enabled: bool,
    pub epsilon: f64,
    pub max_dim: usize,
}

impl Default for ZcaOptions {
    fn default() -> Self {
        ZcaOptions {
            enabled: false,
            epsilon: DEFAULT_EPSILON,
            max_dim: DEFAULT_ZCA_MAX_DIM,
        }
    }
}

/// The fitted tail of the preprocessing chain: per-channel normalization
/// followed by optional ZCA whitening of the flattened image.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessor {
    pub norm: NormStats,
    pub zca: Option<ZcaTransform>,
}

impl Preprocessor {
    pub fn identity(channels: usize) -> Self {
        Preprocessor {
            norm: NormStats::identity(channels),
            zca: None,
        }
    }

    /// Fits on training images only (already rescaled to `[0, 1]`).
    pub fn fit(train: &[&Tensor<f32>], zca: &ZcaOptions) -> Result<(Self, Vec<String>)> {
        let (norm, warnings) = NormStats::fit(train.iter().copied())?;
        let zca = if zca.enabled {
            let d = train[0].len();
            if d > zca.max_dim {
                return Err(Error::Config(format!(
                    "ZCA requested for {d}-dimensional images, above the cap of {}; \
                     use a smaller image size or raise the cap",
                    zca.max_dim
                )));
            }
            let rows = train
                .iter()
                .map(|t| norm.apply(t).map(|n| n.data().iter().map(|&v| f64::from(v)).collect::<Vec<f64>>()))
                .collect::<Result<Vec<_>>>()?;
            Some(ZcaTransform::fit(&rows, zca.epsilon)?)
        } else {
            None
        };
        Ok((Preprocessor { norm, zca }, warnings))
    }

    pub fn apply(&self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        let normed = self.norm.apply(image)?;
        match &self.zca {
            None => Ok(normed),
            Some(z) => Tensor::new(normed.shape(), z.apply_f32(normed.data())?),
        }
    }
}
