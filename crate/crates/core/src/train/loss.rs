use crate::error::{Error, Result};
use crate::tensor::Element;

/// Scores are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient with respect to the scores.
///
/// The gradient is `(p - y) / (p (1 - p) N)` evaluated on the clamped scores.
pub fn bce_loss<T: Element>(scores: &[T], labels: &[T]) -> Result<(f64, Vec<T>)> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "bce_loss",
            left: vec![scores.len()],
            right: vec![labels.len()],
        });
    }
    if scores.is_empty() {
        return Err(Error::Contract("bce_loss on an empty batch".into()));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != T::zero() && y != T::one()) {
        return Err(Error::Contract(format!("label {bad} outside {{0, 1}}")));
    }
    let n = T::of_f64(scores.len() as f64);
    let lo = T::of_f64(CLAMP);
    let hi = T::one() - lo;
    let mut total = 0.0f64;
    let grad = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let p = s.max(lo).min(hi);
            let (pf, yf) = (p.as_f64(), y.as_f64());
            total -= yf * pf.ln() + (1.0 - yf) * (1.0 - pf).ln();
            (p - y) / (p * (T::one() - p) * n)
        })
        .collect();
    Ok((total / scores.len() as f64, grad))
}
