use super::missing_cache;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Row-major reshape `[N, ...] -> [N, prod(...)]`.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn infer<T: Element>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let Some((&n, rest)) = x.shape().split_first() else {
            return Err(Error::dim("Flatten needs a batch axis"));
        };
        x.clone().reshape(&[n, rest.iter().product()])
    }

    pub fn forward_train<T: Element>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(x)?;
        self.input_shape = Some(x.shape().to_vec());
        Ok(out)
    }

    pub fn backward<T: Element>(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.input_shape.take().ok_or_else(|| missing_cache("Flatten"))?;
        grad.clone().reshape(&shape)
    }
}
