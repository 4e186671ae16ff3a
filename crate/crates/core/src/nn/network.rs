use super::{Layer, LayerSpec};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::{Element, Tensor};

/// A sequential stack of layers over a fixed per-sample input shape.
#[derive(Clone, Debug)]
pub struct Network<T: Element> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
}

impl<T: Element> Network<T> {
    /// Builds fresh parameters for `specs`. Layer `i` draws its initial
    /// weights from the `[INIT, i]` substream of `rng`.
    pub fn build(input_shape: &[usize], specs: &[LayerSpec], rng: &Rng) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let mut layer_rng = rng.substream(&[stream::INIT, i as u64]);
            layers.push(Layer::from_spec(spec, &shape, &mut layer_rng).map_err(|e| at_layer(i, spec, e))?);
            shape = spec.output_shape(&shape).map_err(|e| at_layer(i, spec, e))?;
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
        })
    }

    /// Wraps existing layers after checking that their shapes chain.
    pub fn from_layers(input_shape: &[usize], layers: Vec<Layer<T>>) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            let spec = layer.spec();
            match layer {
                Layer::Conv2D(c) if shape.len() == 3 && shape[2] != c.in_channels() => {
                    return Err(at_layer(i, &spec, Error::dim(format!(
                        "expects {} input channels, previous layer yields {:?}",
                        c.in_channels(),
                        shape
                    ))));
                }
                Layer::Dense(d) if shape != [d.in_features()] => {
                    return Err(at_layer(i, &spec, Error::dim(format!(
                        "expects {} input features, previous layer yields {:?}",
                        d.in_features(),
                        shape
                    ))));
                }
                _ => {}
            }
            shape = spec.output_shape(&shape).map_err(|e| at_layer(i, &spec, e))?;
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layers.iter().fold(self.input_shape.clone(), |s, l| {
            l.spec().output_shape(&s).expect("validated at construction")
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(Tensor::len)
            .sum()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.rank() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            return Err(Error::dim(format!(
                "network expects [N, {:?}] input, got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Inference-mode forward pass. Takes `&self`; safe to share.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut act = x.clone();
        for layer in &self.layers {
            act = layer.infer(&act)?;
        }
        Ok(act)
    }

    /// One scalar score per sample; the network must end in a single unit.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        let out = self.infer(x)?;
        if out.shape()[1..] != [1] {
            return Err(Error::dim(format!(
                "expected a single output unit, network yields {:?}",
                &out.shape()[1..]
            )));
        }
        Ok(out.into_data())
    }

    /// Training-mode forward pass. Dropout layer `i` draws its mask from the
    /// `[DROPOUT, i]` substream of `rng`.
    pub fn forward_train(&mut self, x: &Tensor<T>, rng: &Rng) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut act = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let mut layer_rng = rng.substream(&[stream::DROPOUT, i as u64]);
            act = layer.forward_train(&act, &mut layer_rng)?;
        }
        Ok(act)
    }

    /// Backpropagates `grad` (gradient of the loss w.r.t. the network output),
    /// leaving parameter gradients in each layer. Returns the input gradient.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_inner(grad, true)
            .map(|g| g.expect("input gradient requested"))
    }

    /// Like [`Network::backward`] but skips the input gradient of the first
    /// layer, which training never needs.
    pub fn backward_params(&mut self, grad: &Tensor<T>) -> Result<()> {
        self.backward_inner(grad, false).map(|_| ())
    }

    fn backward_inner(&mut self, grad: &Tensor<T>, want_input: bool) -> Result<Option<Tensor<T>>> {
        let mut g = grad.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let need = i > 0 || want_input;
            match layer.backward(&g, need)? {
                Some(next) => g = next,
                None => return Ok(None),
            }
        }
        Ok(Some(g))
    }

    pub fn cast<U: Element>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.iter().map(Layer::cast).collect(),
        }
    }
}

fn at_layer(i: usize, spec: &LayerSpec, e: Error) -> Error {
    Error::Dimension(format!("layer {i} ({}): {e}", spec.kind_name()))
}
