//! Zero-phase (ZCA) whitening.
//!
//! `W = E diag(1 / sqrt(lambda + eps)) E^T` from the eigendecomposition of the
//! centred covariance `(1/N) Xc^T Xc`. Unlike PCA whitening the result is
//! symmetric, so whitened images stay aligned with the original pixel grid.
//! Everything here is `f64`; the matrix is `d x d`, so callers cap `d`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{gemm, transpose};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZcaTransform {
    pub mean: Vec<f64>,
    /// Row-major `d x d`.
    pub whitening: Vec<f64>,
    pub epsilon: f64,
}

impl ZcaTransform {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R], epsilon: f64) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "ZCA needs at least 2 samples, got {n}"
            )));
        }
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::Config(format!("ZCA epsilon must be >= 0, got {epsilon}")));
        }
        let d = rows[0].as_ref().len();
        if d == 0 || rows.iter().any(|r| r.as_ref().len() != d) {
            return Err(Error::Dimension("ZCA rows must share a positive length".into()));
        }

        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.as_ref()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let mut centred = Vec::with_capacity(n * d);
        for r in rows {
            centred.extend(r.as_ref().iter().zip(&mean).map(|(v, m)| v - m));
        }
        let centred_t = transpose(&centred, n, d);
        let mut cov = vec![0.0; d * d];
        gemm(d, n, d, &centred_t, &centred, &mut cov, false);
        cov.iter_mut().for_each(|c| *c /= n as f64);

        let eig = SymmetricEigen::try_new(DMatrix::from_row_slice(d, d, &cov), 1e-14, 10_000)
            .ok_or_else(|| Error::Numeric("covariance eigendecomposition did not converge".into()))?;
        let scale: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&l| 1.0 / (l.max(0.0) + epsilon).sqrt())
            .collect();
        if scale.iter().any(|s| s.is_nan()) {
            return Err(Error::Numeric(
                "singular covariance with epsilon = 0".into(),
            ));
        }
        let e = &eig.eigenvectors;
        let scaled = DMatrix::from_fn(d, d, |i, j| e[(i, j)] * scale[j]);
        let w = scaled * e.transpose();

        let mut whitening = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                whitening[i * d + j] = 0.5 * (w[(i, j)] + w[(j, i)]);
            }
        }
        Ok(ZcaTransform {
            mean,
            whitening,
            epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `W (x - mean)`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::Dimension(format!(
                "ZCA fitted for {d} features, got {}",
                x.len()
            )));
        }
        let centred: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        Ok(self
            .whitening
            .chunks(d)
            .map(|row| row.iter().zip(&centred).map(|(w, c)| w * c).sum())
            .collect())
    }

    pub fn apply_f32(&self, x: &[f32]) -> Result<Vec<f32>> {
        let wide: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        Ok(self.apply(&wide)?.into_iter().map(|v| v as f32).collect())
    }
}
