use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel mean and standard deviation, fitted on the training split and
/// shipped inside the model artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl NormStats {
    pub fn identity(channels: usize) -> Self {
        NormStats {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Fits population statistics over every pixel of every image (last axis
    /// is the channel axis). A channel with zero spread gets divisor 1 and a
    /// warning.
    pub fn fit<'a>(images: impl IntoIterator<Item = &'a Tensor<f32>>) -> Result<(Self, Vec<String>)> {
        let images: Vec<&Tensor<f32>> = images.into_iter().collect();
        let Some(first) = images.first() else {
            return Err(Error::InsufficientData("no images to fit normalization on".into()));
        };
        let c = *first.shape().last().unwrap_or(&0);
        if c == 0 {
            return Err(Error::Dimension("images need a channel axis".into()));
        }
        if let Some(bad) = images.iter().find(|t| t.shape().last() != Some(&c)) {
            return Err(Error::Dimension(format!(
                "inconsistent channel counts: {:?} vs {:?}",
                first.shape(),
                bad.shape()
            )));
        }

        let mut count = 0usize;
        let mut sum = vec![0.0f64; c];
        for img in &images {
            for px in img.data().chunks(c) {
                for (s, &v) in sum.iter_mut().zip(px) {
                    *s += f64::from(v);
                }
            }
            count += img.len() / c;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0f64; c];
        for img in &images {
            for px in img.data().chunks(c) {
                for ((s, &v), m) in sq.iter_mut().zip(px).zip(&mean) {
                    *s += (f64::from(v) - m).powi(2);
                }
            }
        }

        let mut warnings = Vec::new();
        let std = sq
            .iter()
            .enumerate()
            .map(|(ch, s)| {
                let sd = (s / count as f64).sqrt() as f32;
                if sd > 0.0 {
                    sd
                } else {
                    warnings.push(format!(
                        "channel {ch} is constant; normalizing with divisor 1"
                    ));
                    1.0
                }
            })
            .collect();
        Ok((
            NormStats {
                mean: mean.iter().map(|&m| m as f32).collect(),
                std,
            },
            warnings,
        ))
    }

    /// `(x - mean) / std` per channel along the last axis.
    pub fn apply(&self, t: &Tensor<f32>) -> Result<Tensor<f32>> {
        let c = self.channels();
        if t.shape().last() != Some(&c) {
            return Err(Error::Dimension(format!(
                "normalization fitted for {c} channels, got shape {:?}",
                t.shape()
            )));
        }
        let mut out = t.clone();
        for px in out.data_mut().chunks_mut(c) {
            for ((v, m), s) in px.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}
