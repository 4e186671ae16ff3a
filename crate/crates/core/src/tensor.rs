//! Dense row-major tensors and the handful of linear-algebra kernels the
//! layers are built from.
//!
//! Image tensors are laid out `(height, width, channels)`; batched tensors
//! prepend a batch axis. There is no general broadcasting.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating point element type of a [`Tensor`].
///
/// Implemented for `f32` (training and inference) and `f64` (gradient checks).
pub trait Element:
    Float + Default + Debug + Display + Sum + Send + Sync + 'static
{
    const PRECISION: Precision;

    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    const PRECISION: Precision = Precision::F32;

    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    const PRECISION: Precision = Precision::F64;

    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Runtime precision mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    /// Builds a rank-2 tensor from nested rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("ragged rows"));
        }
        Self::new(&[rows.len(), cols], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Row-major flat offset of a multi-index.
    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        flatten_index(&self.shape, index)
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.flat_index(index)?])
    }

    /// Same data under a new shape. The data array is untouched.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn map_unary(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }

    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, &self.data, &other.data, &mut out, false);
        Tensor::new(&[m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor<T>> {
        if self.rank() != 2 {
            return Err(Error::dim(format!(
                "transpose needs a rank-2 tensor, got {:?}",
                self.shape
            )));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        Tensor::new(&[c, r], transpose(&self.data, r, c))
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Largest absolute elementwise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Option<T> {
        if self.shape != other.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (*a - *b).abs())
                .fold(T::zero(), T::max),
        )
    }
}

pub fn flatten_index(shape: &[usize], index: &[usize]) -> Result<usize> {
    if shape.len() != index.len() || index.iter().zip(shape).any(|(i, d)| i >= d) {
        return Err(Error::dim(format!(
            "index {index:?} out of bounds for shape {shape:?}"
        )));
    }
    Ok(index
        .iter()
        .zip(shape)
        .fold(0, |acc, (&i, &d)| acc * d + i))
}

pub fn unflatten_index(shape: &[usize], mut flat: usize) -> Result<Vec<usize>> {
    let total: usize = shape.iter().product();
    if flat >= total {
        return Err(Error::dim(format!(
            "flat index {flat} out of bounds for shape {shape:?}"
        )));
    }
    let mut index = vec![0; shape.len()];
    for (slot, &d) in index.iter_mut().zip(shape).rev() {
        *slot = flat % d;
        flat /= d;
    }
    Ok(index)
}

/// Out-of-place transpose of a row-major `rows x cols` matrix.
pub fn transpose<T: Copy + Default>(data: &[T], rows: usize, cols: usize) -> Vec<T> {
    const BLOCK: usize = 32;
    let mut out = vec![T::default(); data.len()];
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    out[c * rows + r] = data[r * cols + c];
                }
            }
        }
    }
    out
}

const MR: usize = 4;
const NR: usize = 16;
const PAR_THRESHOLD: usize = 1 << 16;

/// `out (m x n) = a (m x k) * b (k x n)`, or `out += a * b` when `accumulate`.
///
/// Every output element is summed over `k` in ascending order starting from
/// zero, whatever the tiling or thread count, so results are reproducible and
/// match a plain triple loop bit for bit.
pub fn gemm<T: Element>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    out: &mut [T],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let block = |(bi, out_rows): (usize, &mut [T])| {
        let row0 = bi * MR;
        let rows = out_rows.len() / n;
        gemm_rows(row0, rows, k, n, a, b, out_rows, accumulate);
    };
    if m * k * n >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        out.par_chunks_mut(MR * n).enumerate().for_each(block);
    } else {
        out.chunks_mut(MR * n).enumerate().for_each(block);
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm_rows<T: Element>(
    row0: usize,
    rows: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    out: &mut [T],
    accumulate: bool,
) {
    let full_cols = n - n % NR;
    if rows == MR {
        let a0 = &a[row0 * k..(row0 + 1) * k];
        let a1 = &a[(row0 + 1) * k..(row0 + 2) * k];
        let a2 = &a[(row0 + 2) * k..(row0 + 3) * k];
        let a3 = &a[(row0 + 3) * k..(row0 + 4) * k];
        for j0 in (0..full_cols).step_by(NR) {
            let mut acc = [[T::zero(); NR]; MR];
            for kk in 0..k {
                let brow: &[T; NR] = b[kk * n + j0..kk * n + j0 + NR].try_into().unwrap();
                let av = [a0[kk], a1[kk], a2[kk], a3[kk]];
                for r in 0..MR {
                    for c in 0..NR {
                        acc[r][c] = acc[r][c] + av[r] * brow[c];
                    }
                }
            }
            for (r, acc_row) in acc.iter().enumerate() {
                let dst = &mut out[r * n + j0..r * n + j0 + NR];
                store(dst, acc_row, accumulate);
            }
        }
    } else {
        for r in 0..rows {
            let arow = &a[(row0 + r) * k..(row0 + r + 1) * k];
            for j0 in (0..full_cols).step_by(NR) {
                let mut acc = [T::zero(); NR];
                for (kk, &av) in arow.iter().enumerate() {
                    let brow = &b[kk * n + j0..kk * n + j0 + NR];
                    for c in 0..NR {
                        acc[c] = acc[c] + av * brow[c];
                    }
                }
                store(&mut out[r * n + j0..r * n + j0 + NR], &acc, accumulate);
            }
        }
    }
    // Remaining columns: dot products in the same k order.
    for r in 0..rows {
        let arow = &a[(row0 + r) * k..(row0 + r + 1) * k];
        for j in full_cols..n {
            let mut acc = T::zero();
            for (kk, &av) in arow.iter().enumerate() {
                acc = acc + av * b[kk * n + j];
            }
            let dst = &mut out[r * n + j];
            *dst = if accumulate { *dst + acc } else { acc };
        }
    }
}

#[inline]
fn store<T: Element>(dst: &mut [T], acc: &[T], accumulate: bool) {
    if accumulate {
        for (d, &v) in dst.iter_mut().zip(acc) {
            *d = *d + v;
        }
    } else {
        dst.copy_from_slice(acc);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for kk in 0..k {
                    s += a[i * k + kk] * b[kk * n + j];
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let a = Tensor::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a.matmul(&Tensor::identity(2)).unwrap(), a);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let a = Tensor::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let z = Tensor::zeros(&[2, 2]);
        assert_eq!(a.matmul(&z).unwrap().data(), &[0.0; 4]);
    }

    #[test]
    fn matmul_small_product() {
        let a = Tensor::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let expected = naive(2, 2, 2, a.data(), b.data());
        assert_eq!(expected, vec![19.0, 22.0, 43.0, 50.0]);
        assert_eq!(a.matmul(&b).unwrap().data(), expected.as_slice());
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[2, 3]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn map_unary_cases() {
        let t = Tensor::<f64>::new(&[2], vec![1.0, -1.0]).unwrap();
        assert_eq!(t.map_unary(|x| -x).data(), &[-1.0, 1.0]);
        let e = Tensor::<f64>::new(&[0], vec![]).unwrap();
        assert!(e.map_unary(|x| x * 2.0).is_empty());
        let h = Tensor::<f64>::new(&[1], vec![0.5]).unwrap();
        assert_eq!(h.map_unary(|x| x * x).data(), &[0.25]);
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::<f32>::new(&[2, 2], vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn index_round_trip(shape in prop::collection::vec(1usize..5, 1..5), seed in any::<usize>()) {
            let total: usize = shape.iter().product();
            let flat = seed % total;
            let idx = unflatten_index(&shape, flat).unwrap();
            prop_assert_eq!(flatten_index(&shape, &idx).unwrap(), flat);
        }

        #[test]
        fn gemm_matches_triple_loop(m in 1usize..11, k in 1usize..9, n in 1usize..37, seed in any::<u64>()) {
            let mut s = seed;
            let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); ((s >> 33) as f64 / 2f64.powi(31)) - 0.5 };
            let a: Vec<f64> = (0..m * k).map(|_| next()).collect();
            let b: Vec<f64> = (0..k * n).map(|_| next()).collect();
            let mut out = vec![0.0; m * n];
            gemm(m, k, n, &a, &b, &mut out, false);
            prop_assert_eq!(out, naive(m, k, n, &a, &b));
        }

        #[test]
        fn reshape_keeps_bits(data in prop::collection::vec(any::<f32>(), 12)) {
            let t = Tensor::new(&[3, 4], data.clone()).unwrap();
            let r = t.reshape(&[2, 6]).unwrap();
            let bits: Vec<u32> = r.data().iter().map(|v| v.to_bits()).collect();
            let orig: Vec<u32> = data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, orig);
        }
    }

    #[test]
    fn transpose_round_trip() {
        let t = Tensor::<f32>::from_fn(&[37, 45], |i| i as f32);
        assert_eq!(t.transpose().unwrap().transpose().unwrap(), t);
        assert_eq!(t.transpose().unwrap().get(&[3, 2]).unwrap(), t.get(&[2, 3]).unwrap());
    }
}
