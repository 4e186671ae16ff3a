use super::{expect_shape, missing_cache};
use crate::error::Result;
use crate::tensor::{Element, Tensor};

#[inline]
pub fn relu_scalar<T: Element>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Logistic function `1 / (1 + e^-x)`, evaluated so that `exp` never sees a
/// large positive argument.
#[inline]
pub fn sigmoid_scalar<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Relu<T: Element> {
    input: Option<Tensor<T>>,
}

impl<T: Element> Relu<T> {
    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        x.map_unary(relu_scalar)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    /// Gradient passes where the input was strictly positive; the
    /// subgradient at zero is zero.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| missing_cache("ReLU"))?;
        expect_shape("ReLU backward", grad.shape(), x.shape())?;
        Tensor::new(
            x.shape(),
            x.data()
                .iter()
                .zip(grad.data())
                .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sigmoid<T: Element> {
    output: Option<Tensor<T>>,
}

impl<T: Element> Sigmoid<T> {
    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        x.map_unary(sigmoid_scalar)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = self.infer(x);
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.output.take().ok_or_else(|| missing_cache("Sigmoid"))?;
        expect_shape("Sigmoid backward", grad.shape(), y.shape())?;
        Tensor::new(
            y.shape(),
            y.data()
                .iter()
                .zip(grad.data())
                .map(|(&s, &g)| g * s * (T::one() - s))
                .collect(),
        )
    }
}
