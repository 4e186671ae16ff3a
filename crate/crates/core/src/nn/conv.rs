//! 2-D convolution (cross-correlation, no kernel flip) lowered to a matrix
//! product over unrolled input patches.
//!
//! Patch rows are ordered `(ky, kx, cin)` so that each kernel tap copies one
//! contiguous channel run out of the NHWC input.

use rayon::prelude::*;

use super::{expect_shape, he_uniform_tensor, missing_cache, LayerSpec, Padding};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{gemm, transpose, Element, Tensor};

#[derive(Clone, Debug)]
pub struct Conv2d<T: Element> {
    in_channels: usize,
    out_channels: usize,
    kernel: (usize, usize),
    stride: usize,
    padding: Padding,
    /// `[out, in, kh, kw]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    cache: Option<Tensor<T>>,
}

/// Output height/width and leading padding for one spatial configuration.
///
/// `valid`: `(H - k) / s + 1`, no padding. `same`: `ceil(H / s)`, with the
/// total padding split so the extra row/column (if odd) goes bottom/right.
pub fn conv_output_geometry(
    h: usize,
    w: usize,
    (kh, kw): (usize, usize),
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize, usize, usize)> {
    if stride == 0 || kh == 0 || kw == 0 {
        return Err(Error::dim("kernel and stride must be positive"));
    }
    match padding {
        Padding::Valid => {
            if h < kh || w < kw {
                return Err(Error::dim(format!(
                    "kernel {kh}x{kw} larger than input {h}x{w} with valid padding"
                )));
            }
            Ok(((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0))
        }
        Padding::Same => {
            if h == 0 || w == 0 {
                return Err(Error::dim("empty spatial input"));
            }
            let oh = h.div_ceil(stride);
            let ow = w.div_ceil(stride);
            let pad_h = ((oh - 1) * stride + kh).saturating_sub(h);
            let pad_w = ((ow - 1) * stride + kw).saturating_sub(w);
            Ok((oh, ow, pad_h / 2, pad_w / 2))
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    oh: usize,
    ow: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    fn input_len(&self) -> usize {
        self.h * self.w * self.cin
    }

    /// Input row/column of kernel tap `k` at output position `o`, if inside.
    #[inline]
    fn source(&self, o: usize, k: usize, pad: usize, extent: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(pad).filter(|&i| i < extent)
    }

    fn im2col_sample<T: Element>(&self, x: &[T], col: &mut [T]) {
        let (k_len, cin) = (self.patch_len(), self.cin);
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = &mut col[(oy * self.ow + ox) * k_len..][..k_len];
                for ky in 0..self.kh {
                    let iy = self.source(oy, ky, self.pad_top, self.h);
                    for kx in 0..self.kw {
                        let dst = &mut row[(ky * self.kw + kx) * cin..][..cin];
                        match (iy, self.source(ox, kx, self.pad_left, self.w)) {
                            (Some(iy), Some(ix)) => {
                                dst.copy_from_slice(&x[(iy * self.w + ix) * cin..][..cin])
                            }
                            _ => dst.fill(T::zero()),
                        }
                    }
                }
            }
        }
    }

    fn col2im_sample<T: Element>(&self, col: &[T], dx: &mut [T]) {
        let (k_len, cin) = (self.patch_len(), self.cin);
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = &col[(oy * self.ow + ox) * k_len..][..k_len];
                for ky in 0..self.kh {
                    let Some(iy) = self.source(oy, ky, self.pad_top, self.h) else {
                        continue;
                    };
                    for kx in 0..self.kw {
                        let Some(ix) = self.source(ox, kx, self.pad_left, self.w) else {
                            continue;
                        };
                        let src = &row[(ky * self.kw + kx) * cin..][..cin];
                        let dst = &mut dx[(iy * self.w + ix) * cin..][..cin];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
    }

    fn im2col<T: Element>(&self, x: &[T]) -> Vec<T> {
        let per_sample = self.positions() * self.patch_len();
        let mut col = vec![T::zero(); self.n * per_sample];
        col.par_chunks_mut(per_sample.max(1))
            .zip(x.par_chunks(self.input_len().max(1)))
            .for_each(|(c, xs)| self.im2col_sample(xs, c));
        col
    }
}

impl<T: Element> Conv2d<T> {
    pub fn new(
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let &[out_channels, in_channels, kh, kw] = weight.shape() else {
            return Err(Error::dim(format!(
                "conv weight must be [out, in, kh, kw], got {:?}",
                weight.shape()
            )));
        };
        expect_shape("conv bias", bias.shape(), &[out_channels])?;
        if stride == 0 || out_channels == 0 || in_channels == 0 || kh == 0 || kw == 0 {
            return Err(Error::config("conv dimensions and stride must be positive"));
        }
        Ok(Conv2d {
            in_channels,
            out_channels,
            kernel: (kh, kw),
            stride,
            padding,
            grad_weight: Tensor::zeros(weight.shape()),
            grad_bias: Tensor::zeros(bias.shape()),
            weight,
            bias,
            cache: None,
        })
    }

    pub fn he_uniform(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: Padding,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_channels * kernel.0 * kernel.1;
        let weight = he_uniform_tensor(&[out_channels, in_channels, kernel.0, kernel.1], fan_in, rng);
        Self::new(weight, Tensor::zeros(&[out_channels]), stride, padding)
            .expect("shapes built consistently")
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Conv2D {
            out_channels: self.out_channels,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    fn geometry(&self, shape: &[usize]) -> Result<Geometry> {
        let &[n, h, w, cin] = shape else {
            return Err(Error::dim(format!(
                "Conv2D expects [N, H, W, C] input, got {shape:?}"
            )));
        };
        if cin != self.in_channels {
            return Err(Error::dim(format!(
                "Conv2D expects {} input channels, got {cin} (input shape {shape:?})",
                self.in_channels
            )));
        }
        let (oh, ow, pad_top, pad_left) =
            conv_output_geometry(h, w, self.kernel, self.stride, self.padding)?;
        Ok(Geometry {
            n,
            h,
            w,
            cin,
            oh,
            ow,
            kh: self.kernel.0,
            kw: self.kernel.1,
            stride: self.stride,
            pad_top,
            pad_left,
        })
    }

    /// Weights as a `[kh*kw*cin, out]` matrix matching the patch layout.
    fn patch_weights(&self) -> Vec<T> {
        let (kh, kw) = self.kernel;
        let (cin, cout) = (self.in_channels, self.out_channels);
        let w = self.weight.data();
        let mut m = vec![T::zero(); kh * kw * cin * cout];
        for co in 0..cout {
            for ci in 0..cin {
                for ky in 0..kh {
                    for kx in 0..kw {
                        m[((ky * kw + kx) * cin + ci) * cout + co] = w[((co * cin + ci) * kh + ky) * kw + kx];
                    }
                }
            }
        }
        m
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.geometry(x.shape())?;
        let col = g.im2col(x.data());
        let (rows, k_len, cout) = (g.n * g.positions(), g.patch_len(), self.out_channels);
        let mut out = vec![T::zero(); rows * cout];
        gemm(rows, k_len, cout, &col, &self.patch_weights(), &mut out, false);
        let bias = self.bias.data();
        for row in out.chunks_mut(cout) {
            for (o, &b) in row.iter_mut().zip(bias) {
                *o = *o + b;
            }
        }
        Tensor::new(&[g.n, g.oh, g.ow, cout], out)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self.cache.take().ok_or_else(|| missing_cache("Conv2D"))?;
        let g = self.geometry(x.shape())?;
        let cout = self.out_channels;
        expect_shape("Conv2D backward", grad.shape(), &[g.n, g.oh, g.ow, cout])?;
        let (rows, k_len) = (g.n * g.positions(), g.patch_len());
        let gd = grad.data();

        let gb = self.grad_bias.data_mut();
        gb.fill(T::zero());
        for row in gd.chunks(cout) {
            for (b, &v) in gb.iter_mut().zip(row) {
                *b = *b + v;
            }
        }

        let col = g.im2col(x.data());
        let col_t = transpose(&col, rows, k_len);
        drop(col);
        let mut gw = vec![T::zero(); k_len * cout];
        gemm(k_len, rows, cout, &col_t, gd, &mut gw, false);
        drop(col_t);
        let (kh, kw) = self.kernel;
        let cin = self.in_channels;
        let dst = self.grad_weight.data_mut();
        for co in 0..cout {
            for ci in 0..cin {
                for ky in 0..kh {
                    for kx in 0..kw {
                        dst[((co * cin + ci) * kh + ky) * kw + kx] = gw[((ky * kw + kx) * cin + ci) * cout + co];
                    }
                }
            }
        }

        if !need_input_grad {
            return Ok(None);
        }
        let w_t = transpose(&self.patch_weights(), k_len, cout);
        let mut gcol = vec![T::zero(); rows * k_len];
        gemm(rows, cout, k_len, gd, &w_t, &mut gcol, false);
        let mut dx = vec![T::zero(); x.len()];
        let per_sample = g.positions() * k_len;
        dx.par_chunks_mut(g.input_len().max(1))
            .zip(gcol.par_chunks(per_sample.max(1)))
            .for_each(|(d, c)| g.col2im_sample(c, d));
        Tensor::new(x.shape(), dx).map(Some)
    }

    pub fn cast<U: Element>(&self) -> Conv2d<U> {
        Conv2d::new(self.weight.cast(), self.bias.cast(), self.stride, self.padding)
            .expect("shapes already validated")
    }
}
