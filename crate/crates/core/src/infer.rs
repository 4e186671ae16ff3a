//! Single-image classification shared by the command line and the service.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub score: f64,
    pub label: String,
    pub threshold: f64,
    pub model_version: String,
    pub latency_ms: f64,
    pub warnings: Vec<String>,
}

/// Decodes `bytes` and runs the full inference chain: resize, rescale,
/// normalize, optional whitening, forward pass, threshold.
pub fn classify(model: &Model, bytes: &[u8]) -> Result<ClassificationResult> {
    let start = Instant::now();
    let (image, warnings) = model.prepare(bytes)?;
    let score = model.score_images(&[&image])?[0];
    Ok(ClassificationResult {
        score: f64::from(score),
        label: model.label(score).to_string(),
        threshold: f64::from(model.meta().threshold),
        model_version: model.meta().version.clone(),
        latency_ms: start.elapsed().as_secs_f64() * 1e3,
        warnings,
    })
}
