use super::{expect_shape, he_uniform_tensor, missing_cache};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{gemm, transpose, Element, Tensor};

/// Fully connected layer, `y = x W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Dense<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Element> Dense<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let &[fan_in, fan_out] = weight.shape() else {
            return Err(Error::dim(format!(
                "dense weight must be [in, out], got {:?}",
                weight.shape()
            )));
        };
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::config("dense dimensions must be positive"));
        }
        expect_shape("dense bias", bias.shape(), &[fan_out])?;
        Ok(Dense {
            grad_weight: Tensor::zeros(weight.shape()),
            grad_bias: Tensor::zeros(bias.shape()),
            weight,
            bias,
            cache: None,
        })
    }

    pub fn he_uniform(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let weight = he_uniform_tensor(&[fan_in, fan_out], fan_in, rng);
        Self::new(weight, Tensor::zeros(&[fan_out])).expect("shapes built consistently")
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (fan_in, fan_out) = (self.in_features(), self.out_features());
        let n = match *x.shape() {
            [n, f] if f == fan_in => n,
            _ => {
                return Err(Error::dim(format!(
                    "Dense expects [N, {fan_in}] input, got {:?}",
                    x.shape()
                )))
            }
        };
        let mut out = vec![T::zero(); n * fan_out];
        gemm(n, fan_in, fan_out, x.data(), self.weight.data(), &mut out, false);
        for row in out.chunks_mut(fan_out) {
            for (o, &b) in row.iter_mut().zip(self.bias.data()) {
                *o = *o + b;
            }
        }
        Tensor::new(&[n, fan_out], out)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.take().ok_or_else(|| missing_cache("Dense"))?;
        let (fan_in, fan_out) = (self.in_features(), self.out_features());
        let n = x.shape()[0];
        expect_shape("Dense backward", grad.shape(), &[n, fan_out])?;

        let gb = self.grad_bias.data_mut();
        gb.fill(T::zero());
        for row in grad.data().chunks(fan_out) {
            for (b, &v) in gb.iter_mut().zip(row) {
                *b = *b + v;
            }
        }

        let x_t = transpose(x.data(), n, fan_in);
        gemm(fan_in, n, fan_out, &x_t, grad.data(), self.grad_weight.data_mut(), false);

        let w_t = transpose(self.weight.data(), fan_in, fan_out);
        let mut dx = vec![T::zero(); n * fan_in];
        gemm(n, fan_out, fan_in, grad.data(), &w_t, &mut dx, false);
        Tensor::new(&[n, fan_in], dx)
    }

    pub fn cast<U: Element>(&self) -> Dense<U> {
        Dense::new(self.weight.cast(), self.bias.cast()).expect("shapes already validated")
    }
}
