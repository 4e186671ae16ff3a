use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network, Padding};
use crate::rng::Rng;
use crate::tensor::Element;

/// Default input shape `(height, width, channels)`.
pub const DEFAULT_INPUT_SHAPE: [usize; 3] = [180, 180, 3];

/// Dropout rates after the last convolution and after the hidden dense layer.
pub const DEFAULT_DROPOUT: [f32; 2] = [0.2, 0.5];

/// A layer stack over a per-sample `(H, W, C)` input, ending in a single
/// sigmoid unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::reference(DEFAULT_INPUT_SHAPE, DEFAULT_DROPOUT)
    }
}

impl ModelSpec {
    /// Four same-padded 3x3 convolutions (16, 32, 64, 128 filters) with ReLU,
    /// 2x2 max pooling after the first three, then a 128-unit dense layer and
    /// the sigmoid output. Sixteen layers precede the output unit.
    pub fn reference(input_shape: [usize; 3], dropout: [f32; 2]) -> Self {
        let mut layers = Vec::new();
        for (i, filters) in [16, 32, 64, 128].into_iter().enumerate() {
            layers.push(LayerSpec::conv(filters, 3, Padding::Same));
            layers.push(LayerSpec::ReLU);
            if i < 3 {
                layers.push(LayerSpec::max_pool(2));
            }
        }
        layers.extend([
            LayerSpec::dropout(dropout[0]),
            LayerSpec::Flatten,
            LayerSpec::dense(128),
            LayerSpec::ReLU,
            LayerSpec::dropout(dropout[1]),
            LayerSpec::dense(1),
            LayerSpec::Sigmoid,
        ]);
        ModelSpec { input_shape, layers }
    }

    /// Layers before the `Dense(1) -> Sigmoid` output pair.
    pub fn hidden_layer_count(&self) -> usize {
        self.layers.len().saturating_sub(2)
    }

    /// Per-sample output shape of every layer, checking that they chain and
    /// that the stack ends in one sigmoid unit.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("input shape {:?} has a zero dimension", self.input_shape)));
        }
        let mut shape = self.input_shape.to_vec();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            shape = spec
                .output_shape(&shape)
                .map_err(|e| Error::Config(format!("layer {i} ({}): {e}", spec.kind_name())))?;
            shapes.push(shape.clone());
        }
        let tail_ok = self.layers.len() >= 2
            && self.layers[self.layers.len() - 1] == LayerSpec::Sigmoid
            && matches!(self.layers[self.layers.len() - 2], LayerSpec::Dense { out_features: 1 });
        if !tail_ok {
            return Err(Error::config("model must end with Dense(1) followed by Sigmoid"));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.output_shapes().map(|_| ())
    }

    pub fn build<T: Element>(&self, rng: &Rng) -> Result<Network<T>> {
        self.validate()?;
        Network::build(&self.input_shape, &self.layers, rng)
    }

    pub fn summary(&self) -> Result<ModelSummary> {
        let shapes = self.output_shapes()?;
        let mut input = self.input_shape.to_vec();
        let mut rows = Vec::with_capacity(self.layers.len());
        for (spec, out) in self.layers.iter().zip(shapes) {
            rows.push(SummaryRow {
                kind: spec.kind_name().to_string(),
                params: spec.param_count(&input)?,
                output_shape: out.clone(),
            });
            input = out;
        }
        Ok(ModelSummary {
            input_shape: self.input_shape,
            total_params: rows.iter().map(|r| r.params).sum(),
            rows,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub kind: String,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSummary {
    pub input_shape: [usize; 3],
    pub rows: Vec<SummaryRow>,
    pub total_params: usize,
}

impl fmt::Display for ModelSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = |s: &[usize]| {
            let parts: Vec<String> = s.iter().map(usize::to_string).collect();
            format!("({})", parts.join(", "))
        };
        writeln!(f, "{:<4} {:<10} {:<16} {:>10}", "#", "layer", "output shape", "params")?;
        writeln!(f, "{}", "-".repeat(43))?;
        writeln!(f, "{:<4} {:<10} {:<16} {:>10}", "", "Input", shape(&self.input_shape), 0)?;
        for (i, row) in self.rows.iter().enumerate() {
            writeln!(
                f,
                "{:<4} {:<10} {:<16} {:>10}",
                i,
                row.kind,
                shape(&row.output_shape),
                row.params
            )?;
        }
        writeln!(f, "{}", "-".repeat(43))?;
        write!(f, "total parameters: {}", self.total_params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_has_sixteen_hidden_layers() {
        let spec = ModelSpec::default();
        assert_eq!(spec.hidden_layer_count(), 16);
        assert_eq!(spec.input_shape, [180, 180, 3]);
        spec.validate().unwrap();
    }

    #[test]
    fn summary_params_by_hand() {
        let s = ModelSpec::reference([64, 64, 3], DEFAULT_DROPOUT).summary().unwrap();
        let conv = |cin: usize, cout: usize| 9 * cin * cout + cout;
        // 64 -> 32 -> 16 -> 8 after three pools; last conv keeps 8x8x128
        let expected = conv(3, 16) + conv(16, 32) + conv(32, 64) + conv(64, 128) + (8 * 8 * 128 * 128 + 128) + (128 + 1);
        assert_eq!(s.total_params, expected);
        assert_eq!(s.rows[10].output_shape, vec![8, 8, 128]);
        assert_eq!(s.rows.last().unwrap().output_shape, vec![1]);
        let text = s.to_string();
        assert!(text.contains("Conv2D") && text.ends_with(&format!("total parameters: {expected}")));
    }

    #[test]
    fn rejects_missing_sigmoid() {
        let mut spec = ModelSpec::reference([16, 16, 3], DEFAULT_DROPOUT);
        spec.layers.pop();
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_too_small_input() {
        let spec = ModelSpec::reference([4, 4, 3], DEFAULT_DROPOUT);
        assert!(spec.validate().is_err());
    }
}
