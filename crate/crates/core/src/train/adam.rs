use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug)]
pub struct Moments<T: Element> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

impl<T: Element> Moments<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Moments {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
        }
    }
}

/// One bias-corrected Adam update of `param` in place. `t` counts from 1.
pub fn adam_step<T: Element>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut Moments<T>,
    t: u64,
    config: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Contract("Adam step index starts at 1".into()));
    }
    for other in [grad.shape(), state.m.shape(), state.v.shape()] {
        if other != param.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: param.shape().to_vec(),
                right: other.to_vec(),
            });
        }
    }
    let b1 = T::of_f64(config.beta1);
    let b2 = T::of_f64(config.beta2);
    let one = T::one();
    let correction1 = T::of_f64(1.0 - config.beta1.powf(t as f64));
    let correction2 = T::of_f64(1.0 - config.beta2.powf(t as f64));
    let lr = T::of_f64(config.learning_rate);
    let eps = T::of_f64(config.epsilon);
    for (((p, &g), m), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(state.m.data_mut())
        .zip(state.v.data_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over every parameter tensor of a network, in layer order.
#[derive(Clone, Debug)]
pub struct Adam<T: Element> {
    config: AdamConfig,
    step: u64,
    moments: Vec<Moments<T>>,
}

impl<T: Element> Adam<T> {
    pub fn new(config: AdamConfig, network: &Network<T>) -> Self {
        let moments = network
            .layers()
            .iter()
            .flat_map(|l| l.params())
            .map(|p| Moments::zeros(p.shape()))
            .collect();
        Adam {
            config,
            step: 0,
            moments,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies the gradients currently stored in the network's layers.
    pub fn step(&mut self, network: &mut Network<T>) -> Result<()> {
        self.step += 1;
        let mut states = self.moments.iter_mut();
        for layer in network.layers_mut() {
            for (param, grad) in layer.params_and_grads() {
                let state = states
                    .next()
                    .ok_or_else(|| Error::State("optimizer built for a different network".into()))?;
                adam_step(param, grad, state, self.step, &self.config)?;
            }
        }
        Ok(())
    }
}
