//! Central finite-difference checks of the analytic backward passes.
//!
//! Intended for `f64` networks; at `f32` the differences drown in rounding.

use crate::error::{Error, Result};
use crate::nn::{Layer, Network};
use crate::rng::{stream, Rng};
use crate::tensor::Tensor;
use crate::train::bce_loss;

pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps vanishing gradients from
/// turning rounding noise into huge ratios.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_error: f64,
    /// Description of the probe with the largest error.
    pub worst: String,
}

impl GradCheckReport {
    fn new() -> Self {
        GradCheckReport {
            probes: 0,
            max_rel_error: 0.0,
            worst: String::new(),
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64, what: impl FnOnce() -> String) {
        let e = relative_error(analytic, numeric);
        self.probes += 1;
        if e > self.max_rel_error || self.probes == 1 {
            self.max_rel_error = e;
            self.worst = format!("{} (analytic {analytic:e}, numeric {numeric:e})", what());
        }
    }
}

/// Addresses one scalar among a set of tensors.
fn pick(sizes: &[usize], rng: &mut Rng) -> (usize, usize) {
    let total: usize = sizes.iter().sum();
    let mut k = rng.below(total);
    for (t, &n) in sizes.iter().enumerate() {
        if k < n {
            return (t, k);
        }
        k -= n;
    }
    unreachable!("index below total size")
}

/// Checks one layer against the scalar loss `sum(output * R)` for a fixed
/// random `R`: `probes` samples over the parameters (if any) and `probes`
/// over the input. Dropout masks are held fixed across evaluations.
pub fn check_layer(layer: &Layer<f64>, x: &Tensor<f64>, probes: usize, step: f64, rng: &Rng) -> Result<GradCheckReport> {
    let mask_rng = rng.substream(&[stream::DROPOUT]);
    let mut probe_rng = rng.substream(&[stream::PROBE]);
    let forward = |l: &Layer<f64>, x: &Tensor<f64>| -> Result<Tensor<f64>> {
        l.clone().forward_train(x, &mut mask_rng.clone())
    };

    let mut live = layer.clone();
    let out = live.forward_train(x, &mut mask_rng.clone())?;
    let proj = Tensor::from_fn(out.shape(), |_| probe_rng.uniform_range(-1.0, 1.0));
    let loss = |out: &Tensor<f64>| -> f64 { out.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum() };
    let dx = live
        .backward(&proj, true)?
        .ok_or_else(|| Error::State("input gradient missing".into()))?;
    let grads: Vec<Tensor<f64>> = live.params_and_grads().into_iter().map(|(_, g)| g.clone()).collect();

    let mut report = GradCheckReport::new();
    let sizes: Vec<usize> = grads.iter().map(Tensor::len).collect();
    if !sizes.is_empty() {
        for _ in 0..probes {
            let (t, i) = pick(&sizes, &mut probe_rng);
            let eval = |delta: f64| -> Result<f64> {
                let mut l = layer.clone();
                l.params_mut()[t].data_mut()[i] += delta;
                Ok(loss(&forward(&l, x)?))
            };
            let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
            report.record(grads[t].data()[i], numeric, || format!("param {t}[{i}]"));
        }
    }
    for _ in 0..probes {
        let i = probe_rng.below(x.len());
        let eval = |delta: f64| -> Result<f64> {
            let mut xp = x.clone();
            xp.data_mut()[i] += delta;
            Ok(loss(&forward(layer, &xp)?))
        };
        let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
        report.record(dx.data()[i], numeric, || format!("input[{i}]"));
    }
    Ok(report)
}

/// Checks a whole network under mean binary cross-entropy against `labels`:
/// `probes` samples over all parameters and `probes` over the input.
pub fn check_network(
    net: &Network<f64>,
    x: &Tensor<f64>,
    labels: &[f64],
    probes: usize,
    step: f64,
    rng: &Rng,
) -> Result<GradCheckReport> {
    let mask_rng = rng.substream(&[stream::DROPOUT]);
    let mut probe_rng = rng.substream(&[stream::PROBE]);
    let loss = |n: &Network<f64>, x: &Tensor<f64>| -> Result<f64> {
        let out = n.clone().forward_train(x, &mask_rng)?;
        Ok(bce_loss(out.data(), labels)?.0)
    };

    let mut live = net.clone();
    let out = live.forward_train(x, &mask_rng)?;
    let (_, g) = bce_loss(out.data(), labels)?;
    let dx = live.backward(&Tensor::new(out.shape(), g)?)?;
    let mut grads = Vec::new();
    let mut owners = Vec::new();
    for (li, layer) in live.layers_mut().iter_mut().enumerate() {
        for (pi, (_, grad)) in layer.params_and_grads().into_iter().enumerate() {
            grads.push(grad.clone());
            owners.push((li, pi));
        }
    }

    let mut report = GradCheckReport::new();
    let sizes: Vec<usize> = grads.iter().map(Tensor::len).collect();
    if !sizes.is_empty() {
        for _ in 0..probes {
            let (t, i) = pick(&sizes, &mut probe_rng);
            let (li, pi) = owners[t];
            let eval = |delta: f64| -> Result<f64> {
                let mut n = net.clone();
                n.layers_mut()[li].params_mut()[pi].data_mut()[i] += delta;
                loss(&n, x)
            };
            let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
            report.record(grads[t].data()[i], numeric, || format!("layer {li} param {pi}[{i}]"));
        }
    }
    for _ in 0..probes {
        let i = probe_rng.below(x.len());
        let eval = |delta: f64| -> Result<f64> {
            let mut xp = x.clone();
            xp.data_mut()[i] += delta;
            loss(net, &xp)
        };
        let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
        report.record(dx.data()[i], numeric, || format!("input[{i}]"));
    }
    Ok(report)
}
