use super::{check_dropout_rate, expect_shape, missing_cache, Mode};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during
/// training so inference is the identity.
#[derive(Clone, Debug)]
pub struct Dropout<T: Element> {
    rate: f32,
    mask: Option<Tensor<T>>,
}

impl<T: Element> Dropout<T> {
    pub fn new(rate: f32) -> Result<Self> {
        check_dropout_rate(rate)?;
        Ok(Dropout { rate, mask: None })
    }

    pub fn rate(&self) -> f32 {
        self.rate
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Result<Tensor<T>> {
        if mode == Mode::Infer {
            return Ok(x.clone());
        }
        let keep = 1.0 - f64::from(self.rate);
        let scale = T::of_f64(1.0 / keep);
        let mask = Tensor::from_fn(x.shape(), |_| {
            if rng.bernoulli(keep) {
                scale
            } else {
                T::zero()
            }
        });
        let out = Tensor::new(
            x.shape(),
            x.data().iter().zip(mask.data()).map(|(&v, &m)| v * m).collect(),
        )?;
        self.mask = Some(mask);
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.take().ok_or_else(|| missing_cache("Dropout"))?;
        expect_shape("Dropout backward", grad.shape(), mask.shape())?;
        Tensor::new(
            grad.shape(),
            grad.data().iter().zip(mask.data()).map(|(&g, &m)| g * m).collect(),
        )
    }
}
