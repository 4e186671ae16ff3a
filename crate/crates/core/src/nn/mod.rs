//! Layers with hand-written forward and backward passes.
//!
//! Activations flow as batched NHWC tensors (`[N, H, W, C]`) through the
//! convolutional part and as `[N, features]` after [`Flatten`]. Every layer
//! offers a read-only `infer` path and a caching `forward_train` path; the
//! cache is consumed by exactly one `backward` call.

mod activation;
mod conv;
mod dense;
mod dropout;
mod flatten;
mod network;
mod pool;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

pub use activation::{relu_scalar, sigmoid_scalar, Relu, Sigmoid};
pub use conv::{conv_output_geometry, Conv2d};
pub use dense::Dense;
pub use dropout::Dropout;
pub use flatten::Flatten;
pub use network::Network;
pub use pool::MaxPool2d;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Description of one layer, without parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    Conv2D {
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: Padding,
    },
    MaxPool2D {
        window: usize,
        stride: usize,
    },
    Dense {
        out_features: usize,
    },
    Dropout {
        rate: f32,
    },
    Flatten,
    ReLU,
    Sigmoid,
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize, padding: Padding) -> Self {
        LayerSpec::Conv2D {
            out_channels,
            kernel: (kernel, kernel),
            stride: 1,
            padding,
        }
    }

    pub fn max_pool(window: usize) -> Self {
        LayerSpec::MaxPool2D {
            window,
            stride: window,
        }
    }

    pub fn dense(out_features: usize) -> Self {
        LayerSpec::Dense { out_features }
    }

    pub fn dropout(rate: f32) -> Self {
        LayerSpec::Dropout { rate }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2D { .. } => "Conv2D",
            LayerSpec::MaxPool2D { .. } => "MaxPool2D",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::Dropout { .. } => "Dropout",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::ReLU => "ReLU",
            LayerSpec::Sigmoid => "Sigmoid",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv2D {
                out_channels,
                kernel: (kh, kw),
                stride,
                ..
            } => {
                if out_channels == 0 || kh == 0 || kw == 0 || stride == 0 {
                    return Err(Error::config(format!(
                        "Conv2D hyperparameters must be positive: {self:?}"
                    )));
                }
            }
            LayerSpec::MaxPool2D { window, stride } => {
                if window == 0 || stride == 0 {
                    return Err(Error::config(format!(
                        "MaxPool2D hyperparameters must be positive: {self:?}"
                    )));
                }
            }
            LayerSpec::Dense { out_features } => {
                if out_features == 0 {
                    return Err(Error::config("Dense out_features must be positive"));
                }
            }
            LayerSpec::Dropout { rate } => check_dropout_rate(rate)?,
            LayerSpec::Flatten | LayerSpec::ReLU | LayerSpec::Sigmoid => {}
        }
        Ok(())
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        match *self {
            LayerSpec::Conv2D {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [h, w, _] = spatial(self, input)?;
                let (oh, ow, _, _) = conv_output_geometry(h, w, kernel, stride, padding)?;
                Ok(vec![oh, ow, out_channels])
            }
            LayerSpec::MaxPool2D { window, stride } => {
                let [h, w, c] = spatial(self, input)?;
                let (oh, ow) = pool::pool_output_hw(h, w, window, stride)?;
                Ok(vec![oh, ow, c])
            }
            LayerSpec::Dense { out_features } => {
                if input.len() != 1 {
                    return Err(Error::dim(format!(
                        "Dense expects a flat feature vector, got shape {input:?}"
                    )));
                }
                Ok(vec![out_features])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dropout { .. } | LayerSpec::ReLU | LayerSpec::Sigmoid => Ok(input.to_vec()),
        }
    }

    /// Number of trainable scalars for a per-sample input shape.
    pub fn param_count(&self, input: &[usize]) -> Result<usize> {
        Ok(match *self {
            LayerSpec::Conv2D {
                out_channels,
                kernel: (kh, kw),
                ..
            } => {
                let [_, _, cin] = spatial(self, input)?;
                out_channels * cin * kh * kw + out_channels
            }
            LayerSpec::Dense { out_features } => {
                let fan_in: usize = input.iter().product();
                fan_in * out_features + out_features
            }
            _ => 0,
        })
    }
}

fn spatial(spec: &LayerSpec, input: &[usize]) -> Result<[usize; 3]> {
    match *input {
        [h, w, c] => Ok([h, w, c]),
        _ => Err(Error::dim(format!(
            "{} expects an (height, width, channels) input, got {input:?}",
            spec.kind_name()
        ))),
    }
}

pub(crate) fn check_dropout_rate(rate: f32) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// A layer together with its parameters and backward cache.
#[derive(Clone, Debug)]
pub enum Layer<T: Element> {
    Conv2D(Conv2d<T>),
    MaxPool2D(MaxPool2d),
    Dense(Dense<T>),
    Dropout(Dropout<T>),
    Flatten(Flatten),
    ReLU(Relu<T>),
    Sigmoid(Sigmoid<T>),
}

impl<T: Element> Layer<T> {
    /// Materializes a layer for the given per-sample input shape. Weights are
    /// He-uniform from `rng`, biases zero.
    pub fn from_spec(spec: &LayerSpec, input: &[usize], rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        spec.output_shape(input)?;
        Ok(match *spec {
            LayerSpec::Conv2D {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let cin = input[2];
                Layer::Conv2D(Conv2d::he_uniform(cin, out_channels, kernel, stride, padding, rng))
            }
            LayerSpec::MaxPool2D { window, stride } => Layer::MaxPool2D(MaxPool2d::new(window, stride)),
            LayerSpec::Dense { out_features } => {
                Layer::Dense(Dense::he_uniform(input[0], out_features, rng))
            }
            LayerSpec::Dropout { rate } => Layer::Dropout(Dropout::new(rate)?),
            LayerSpec::Flatten => Layer::Flatten(Flatten::default()),
            LayerSpec::ReLU => Layer::ReLU(Relu::default()),
            LayerSpec::Sigmoid => Layer::Sigmoid(Sigmoid::default()),
        })
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2D(l) => l.spec(),
            Layer::MaxPool2D(l) => LayerSpec::MaxPool2D {
                window: l.window,
                stride: l.stride,
            },
            Layer::Dense(l) => LayerSpec::Dense {
                out_features: l.out_features(),
            },
            Layer::Dropout(l) => LayerSpec::Dropout { rate: l.rate() },
            Layer::Flatten(_) => LayerSpec::Flatten,
            Layer::ReLU(_) => LayerSpec::ReLU,
            Layer::Sigmoid(_) => LayerSpec::Sigmoid,
        }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2D(l) => l.infer(x),
            Layer::MaxPool2D(l) => l.infer(x),
            Layer::Dense(l) => l.infer(x),
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::Flatten(l) => l.infer(x),
            Layer::ReLU(l) => Ok(l.infer(x)),
            Layer::Sigmoid(l) => Ok(l.infer(x)),
        }
    }

    /// Training-mode forward. `rng` is only drawn from by dropout.
    pub fn forward_train(&mut self, x: &Tensor<T>, rng: &mut Rng) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2D(l) => l.forward_train(x),
            Layer::MaxPool2D(l) => l.forward_train(x),
            Layer::Dense(l) => l.forward_train(x),
            Layer::Dropout(l) => l.forward(x, Mode::Train, rng),
            Layer::Flatten(l) => l.forward_train(x),
            Layer::ReLU(l) => Ok(l.forward_train(x)),
            Layer::Sigmoid(l) => Ok(l.forward_train(x)),
        }
    }

    /// Consumes the forward cache, stores parameter gradients and returns the
    /// gradient with respect to the layer input (skipped when not needed).
    pub fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        match self {
            Layer::Conv2D(l) => l.backward(grad, need_input_grad),
            Layer::Dense(l) => l.backward(grad).map(Some),
            Layer::MaxPool2D(l) => l.backward(grad).map(Some),
            Layer::Dropout(l) => l.backward(grad).map(Some),
            Layer::Flatten(l) => l.backward(grad).map(Some),
            Layer::ReLU(l) => l.backward(grad).map(Some),
            Layer::Sigmoid(l) => l.backward(grad).map(Some),
        }
    }

    /// `(parameter, gradient)` pairs, weights before biases.
    pub fn params_and_grads(&mut self) -> Vec<(&mut Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Conv2D(l) => vec![(&mut l.weight, &l.grad_weight), (&mut l.bias, &l.grad_bias)],
            Layer::Dense(l) => vec![(&mut l.weight, &l.grad_weight), (&mut l.bias, &l.grad_bias)],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2D(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2D(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn cast<U: Element>(&self) -> Layer<U> {
        match self {
            Layer::Conv2D(l) => Layer::Conv2D(l.cast()),
            Layer::Dense(l) => Layer::Dense(l.cast()),
            Layer::MaxPool2D(l) => Layer::MaxPool2D(l.clone()),
            Layer::Dropout(l) => Layer::Dropout(Dropout::new(l.rate()).expect("validated rate")),
            Layer::Flatten(_) => Layer::Flatten(Flatten::default()),
            Layer::ReLU(_) => Layer::ReLU(Relu::default()),
            Layer::Sigmoid(_) => Layer::Sigmoid(Sigmoid::default()),
        }
    }
}

pub(crate) fn missing_cache(layer: &str) -> Error {
    Error::State(format!(
        "{layer} backward called without a preceding training-mode forward"
    ))
}

pub(crate) fn expect_shape(op: &'static str, got: &[usize], want: &[usize]) -> Result<()> {
    if got != want {
        return Err(Error::ShapeMismatch {
            op,
            left: got.to_vec(),
            right: want.to_vec(),
        });
    }
    Ok(())
}

pub(crate) fn he_uniform_tensor<T: Element>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of_f64(rng.uniform_range(-limit, limit)))
}
