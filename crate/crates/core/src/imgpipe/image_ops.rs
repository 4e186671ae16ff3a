//! Decoding, bilinear resampling and the 1/255 rescale.

use image::{ColorType, ImageFormat};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A decoded RGB image, values in `[0, 255]`, shape `[H, W, 3]`.
#[derive(Clone, Debug)]
pub struct DecodedImage {
    pub pixels: Tensor<f32>,
    /// Channel conversions applied during decoding.
    pub notes: Vec<String>,
}

pub fn sniff_format(bytes: &[u8]) -> Option<ImageFormat> {
    match image::guess_format(bytes) {
        Ok(f @ (ImageFormat::Png | ImageFormat::Jpeg)) => Some(f),
        _ => None,
    }
}

/// Decodes PNG or JPEG bytes into an RGB tensor. Grayscale is replicated to
/// three channels and alpha is dropped; both are reported in `notes`.
pub fn decode_rgb(bytes: &[u8]) -> Result<DecodedImage> {
    let format = sniff_format(bytes).ok_or_else(|| Error::Decode {
        path: None,
        reason: "not a PNG or JPEG image".into(),
    })?;
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode {
        path: None,
        reason: e.to_string(),
    })?;
    let mut notes = Vec::new();
    match img.color() {
        ColorType::L8 | ColorType::L16 => notes.push("grayscale image replicated to 3 channels".to_string()),
        ColorType::La8 | ColorType::La16 => {
            notes.push("grayscale image replicated to 3 channels".to_string());
            notes.push("alpha channel dropped".to_string());
        }
        ColorType::Rgba8 | ColorType::Rgba16 | ColorType::Rgba32F => {
            notes.push("alpha channel dropped".to_string())
        }
        _ => {}
    }
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(f32::from).collect();
    Ok(DecodedImage {
        pixels: Tensor::new(&[h as usize, w as usize, 3], data)?,
        notes,
    })
}

/// Multiplier that maps 8-bit pixel values onto `[0, 1]`.
pub const RESCALE_FACTOR: f64 = 1.0 / 255.0;

/// Maps 8-bit pixel values `[0, 255]` to `[0, 1]` by dividing by 255.
pub fn rescale(image: &Tensor<f32>) -> Result<Tensor<f32>> {
    if let Some(bad) = image.data().iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::Contract(format!(
            "rescale expects values in [0, 255], found {bad}"
        )));
    }
    Ok(image.map_unary(|v| v / 255.0))
}

/// Bilinear resampling of an `[H, W, C]` image with half-pixel centres
/// (`align_corners = false`). Channels are resampled independently.
pub fn resize_bilinear(image: &Tensor<f32>, (th, tw): (usize, usize)) -> Result<Tensor<f32>> {
    let &[h, w, c] = image.shape() else {
        return Err(Error::Dimension(format!(
            "resize expects an [H, W, C] image, got {:?}",
            image.shape()
        )));
    };
    if th == 0 || tw == 0 || h == 0 || w == 0 {
        return Err(Error::Dimension(format!(
            "cannot resize {h}x{w} to {th}x{tw}"
        )));
    }
    if (th, tw) == (h, w) {
        return Ok(image.clone());
    }
    let ys = sample_positions(h, th);
    let xs = sample_positions(w, tw);
    let src = image.data();
    let mut out = Vec::with_capacity(th * tw * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p = |y: usize, x: usize| f64::from(src[(y * w + x) * c + ch]);
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    Tensor::new(&[th, tw, c], out)
}

fn sample_positions(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(src_len - 1);
            let i1 = (i0 + 1).min(src_len - 1);
            let frac = if i0 == src_len - 1 { 0.0 } else { s - i0 as f64 };
            (i0, i1, frac)
        })
        .collect()
}

/// Decode, resize to `(H, W)` and rescale: the shared front half of training
/// ingestion and inference.
pub fn prepare_image(bytes: &[u8], size: (usize, usize)) -> Result<DecodedImage> {
    let decoded = decode_rgb(bytes)?;
    let resized = resize_bilinear(&decoded.pixels, size)?;
    Ok(DecodedImage {
        pixels: rescale(&resized)?,
        notes: decoded.notes,
    })
}
