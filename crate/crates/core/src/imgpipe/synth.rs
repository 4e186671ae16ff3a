//! Procedural two-class texture dataset for desk-scale runs.
//!
//! Class 0 images carry oriented sinusoidal stripes, class 1 images carry
//! scattered gaussian spots. Per-image brightness targets are drawn from the
//! same stratified grid for both classes and each channel is shifted to hit
//! its target exactly, so the classes differ in structure rather than in mean
//! intensity. Every image comes from its own RNG substream.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use super::dataset::{Dataset, Sample, SampleSource, SplitRatios};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::Tensor;

/// One generated RGB image with 8-bit pixels, row-major `[H, W, 3]`.
#[derive(Clone, Debug)]
pub struct SyntheticImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
    pub label: u8,
}

impl SyntheticImage {
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(
            &[self.height, self.width, 3],
            self.pixels.iter().map(|&p| f32::from(p) / 255.0).collect(),
        )
        .expect("pixel buffer sized from dimensions")
    }
}

fn stripes(rng: &mut Rng, h: usize, w: usize) -> Vec<f64> {
    let theta = rng.uniform_range(0.0, PI);
    let size = h.min(w) as f64;
    let period = rng.uniform_range(size / 8.0, size / 4.0).max(2.0);
    let phase = rng.uniform_range(0.0, TAU);
    let (c, s) = (theta.cos(), theta.sin());
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            out.push((TAU * (x as f64 * c + y as f64 * s) / period + phase).sin());
        }
    }
    out
}

fn spots(rng: &mut Rng, h: usize, w: usize) -> Vec<f64> {
    let count = 6 + rng.below(7);
    let size = h.min(w) as f64;
    let blobs: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            let r = rng.uniform_range(0.04, 0.08) * size;
            (rng.uniform_range(0.0, h as f64), rng.uniform_range(0.0, w as f64), r.max(0.75))
        })
        .collect();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let v: f64 = blobs
                .iter()
                .map(|&(cy, cx, r)| {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    (-d2 / (2.0 * r * r)).exp()
                })
                .sum();
            out.push(2.0 * v.min(1.0) - 1.0);
        }
    }
    out
}

/// Generates image `index` of class `label`. `n_per_class` fixes the shared
/// brightness grid.
pub fn synthesize_image(
    rng: &Rng,
    label: u8,
    index: usize,
    n_per_class: usize,
    (h, w): (usize, usize),
) -> SyntheticImage {
    let mut r = rng.substream(&[stream::SYNTH, u64::from(label), index as u64]);
    let target = 0.35 + 0.3 * (index as f64 + 0.5) / n_per_class as f64;
    let pattern = if label == 0 { stripes(&mut r, h, w) } else { spots(&mut r, h, w) };
    let amplitude = r.uniform_range(0.15, 0.25);
    let tint: [f64; 3] = [r.uniform_range(0.7, 1.0), r.uniform_range(0.7, 1.0), r.uniform_range(0.7, 1.0)];

    let mut channels: Vec<Vec<f64>> = tint
        .iter()
        .map(|t| pattern.iter().map(|p| amplitude * t * p + 0.04 * r.normal()).collect())
        .collect();
    for ch in &mut channels {
        let mean = ch.iter().sum::<f64>() / ch.len() as f64;
        ch.iter_mut().for_each(|v| *v += target - mean);
    }
    let mut pixels = Vec::with_capacity(h * w * 3);
    for i in 0..h * w {
        for ch in &channels {
            pixels.push((ch[i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    SyntheticImage {
        height: h,
        width: w,
        pixels,
        label,
    }
}

/// All images, class 0 first, each class in index order.
pub fn synthesize_images(n_per_class: usize, size: (usize, usize), rng: &Rng) -> Result<Vec<SyntheticImage>> {
    if n_per_class == 0 {
        return Err(Error::Config("n_per_class must be at least 1".into()));
    }
    if size.0 == 0 || size.1 == 0 {
        return Err(Error::Dimension(format!("invalid synthetic image size {size:?}")));
    }
    use rayon::prelude::*;
    Ok((0..2 * n_per_class)
        .into_par_iter()
        .map(|i| synthesize_image(rng, (i / n_per_class) as u8, i % n_per_class, n_per_class, size))
        .collect())
}

pub fn generate_synthetic_dataset(
    n_per_class: usize,
    image_size: (usize, usize),
    rng: &Rng,
    ratios: SplitRatios,
) -> Result<Dataset> {
    let samples = synthesize_images(n_per_class, image_size, rng)?
        .iter()
        .enumerate()
        .map(|(i, img)| Sample {
            image: img.to_tensor(),
            label: img.label,
            source: SampleSource::Synthetic(i),
        })
        .collect();
    Dataset::new(samples, ratios, rng)
}

/// Directory names for the two classes when written to disk; their
/// lexicographic order matches the label order.
pub const SYNTHETIC_CLASS_DIRS: [&str; 2] = ["aegypti", "albopictus"];

/// Writes images as PNG files under `root/<class dir>/`, returning the paths
/// in generation order. Pixels survive the round trip exactly.
pub fn write_synthetic_images(root: &Path, images: &[SyntheticImage]) -> Result<Vec<PathBuf>> {
    for dir in SYNTHETIC_CLASS_DIRS {
        fs::create_dir_all(root.join(dir))?;
    }
    let mut counters = [0usize; 2];
    let mut paths = Vec::with_capacity(images.len());
    for img in images {
        let label = usize::from(img.label.min(1));
        let path = root
            .join(SYNTHETIC_CLASS_DIRS[label])
            .join(format!("{}_{:05}.png", SYNTHETIC_CLASS_DIRS[label], counters[label]));
        counters[label] += 1;
        image::save_buffer(&path, &img.pixels, img.width as u32, img.height as u32, image::ExtendedColorType::Rgb8)
            .map_err(|e| Error::Io(std::io::Error::other(format!("{}: {e}", path.display()))))?;
        paths.push(path);
    }
    Ok(paths)
}
