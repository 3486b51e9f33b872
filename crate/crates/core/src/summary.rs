//! Posterior summaries (mean, covariance, standard deviation, MAD) from
//! weighted draws.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    #[serde(with = "crate::serde_ext::matrix_rows")]
    pub cov: DMatrix<f64>,
    pub std: Vec<f64>,
    /// Mean absolute deviation of each coordinate about its mean.
    pub mad: Vec<f64>,
}

impl Moments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `√‖Σ‖₂`.
    pub fn spectral_scale(&self) -> f64 {
        libm::sqrt(spectral_norm(&self.cov))
    }
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    nalgebra::SymmetricEigen::new(sym).eigenvalues.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
}

/// Self-normalized moments of row-major `draws` (`t × d`) under `weights`
/// (normalized internally; `None` means uniform). Two passes: the mean, then
/// deviations about it.
pub fn weighted_moments(draws: &[f64], d: usize, weights: Option<&[f64]>) -> Result<Moments> {
    if d == 0 || draws.len() % d != 0 {
        return Err(Error::DimensionMismatch { expected: d, got: draws.len() });
    }
    let t = draws.len() / d;
    if t == 0 {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != t {
                return Err(Error::DimensionMismatch { expected: t, got: w.len() });
            }
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        }
        None => vec![1.0 / t as f64; t],
    };
    let mut mean = vec![0.0; d];
    for (row, wi) in draws.chunks_exact(d).zip(&w) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += wi * x;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    let mut mad = vec![0.0; d];
    let mut dev = vec![0.0; d];
    for (row, wi) in draws.chunks_exact(d).zip(&w) {
        for k in 0..d {
            dev[k] = row[k] - mean[k];
            mad[k] += wi * dev[k].abs();
        }
        for a in 0..d {
            for b in 0..=a {
                cov[(a, b)] += wi * dev[a] * dev[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    let std = (0..d).map(|i| libm::sqrt(cov[(i, i)])).collect();
    Ok(Moments { mean, cov, std, mad })
}
