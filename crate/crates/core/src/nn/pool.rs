use super::{expect_shape, missing_cache};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub(crate) fn pool_output_hw(h: usize, w: usize, window: usize, stride: usize) -> Result<(usize, usize)> {
    if window > h || window > w {
        return Err(Error::dim(format!(
            "pooling window {window} larger than input {h}x{w}"
        )));
    }
    Ok(((h - window) / stride + 1, (w - window) / stride + 1))
}

/// Max pooling over square windows, no padding.
///
/// Ties resolve to the first maximum in row-major window order.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub window: usize,
    pub stride: usize,
    cache: Option<PoolCache>,
}

#[derive(Clone, Debug)]
struct PoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(window: usize, stride: usize) -> Self {
        MaxPool2d {
            window,
            stride,
            cache: None,
        }
    }

    fn pool<T: Element>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let &[n, h, w, c] = x.shape() else {
            return Err(Error::dim(format!(
                "MaxPool2D expects [N, H, W, C] input, got {:?}",
                x.shape()
            )));
        };
        let (oh, ow) = pool_output_hw(h, w, self.window, self.stride)?;
        let xd = x.data();
        let mut out = Vec::with_capacity(n * oh * ow * c);
        let mut argmax = Vec::with_capacity(n * oh * ow * c);
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best_idx = usize::MAX;
                        let mut best = T::neg_infinity();
                        for wy in 0..self.window {
                            for wx in 0..self.window {
                                let iy = oy * self.stride + wy;
                                let ix = ox * self.stride + wx;
                                let idx = ((b * h + iy) * w + ix) * c + ch;
                                if best_idx == usize::MAX || xd[idx] > best {
                                    best = xd[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        out.push(best);
                        argmax.push(best_idx);
                    }
                }
            }
        }
        Ok((Tensor::new(&[n, oh, ow, c], out)?, argmax))
    }

    pub fn infer<T: Element>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.pool(x).map(|(out, _)| out)
    }

    pub fn forward_train<T: Element>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (out, argmax) = self.pool(x)?;
        self.cache = Some(PoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        });
        Ok(out)
    }

    /// Flat input indices chosen by the last training forward.
    pub fn cached_argmax(&self) -> Option<&[usize]> {
        self.cache.as_ref().map(|c| c.argmax.as_slice())
    }

    pub fn backward<T: Element>(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("MaxPool2D"))?;
        if grad.len() != cache.argmax.len() {
            return Err(Error::ShapeMismatch {
                op: "MaxPool2D backward",
                left: grad.shape().to_vec(),
                right: vec![cache.argmax.len()],
            });
        }
        expect_shape("MaxPool2D backward", &grad.shape()[..1], &cache.input_shape[..1])?;
        let mut dx = Tensor::zeros(&cache.input_shape);
        let d = dx.data_mut();
        for (&idx, &g) in cache.argmax.iter().zip(grad.data()) {
            d[idx] = d[idx] + g;
        }
        Ok(dx)
    }
}
