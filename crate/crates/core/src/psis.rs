//! Pareto-smoothed importance sampling and the k̂ tail diagnostic.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::distributions::SampleBatch;
use crate::error::{Error, Result};
use crate::math;
use crate::summary::{weighted_moments, Moments};

/// k̂ at or below this is good.
pub const K_GOOD: f64 = 0.5;
/// k̂ above this makes importance sampling unreliable.
pub const K_UNRELIABLE: f64 = 0.7;
/// Stand-in for `k̂ = −∞` when all weights are equal.
pub const DEGENERATE_K_HAT: f64 = -1.0e6;
/// Minimum number of tail excesses for a GPD fit.
pub const MIN_TAIL: usize = 5;
/// Minimum number of weights for smoothing.
pub const MIN_DRAWS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KHatCategory {
    Good,
    Acceptable,
    Unreliable,
}

pub fn classify_k_hat(k: f64) -> KHatCategory {
    if k <= K_GOOD {
        KHatCategory::Good
    } else if k <= K_UNRELIABLE {
        KHatCategory::Acceptable
    } else {
        KHatCategory::Unreliable
    }
}

/// Generalized Pareto fit by the Zhang–Stephens posterior-mean estimator.
/// Returns `(k̂, σ̂)`; no prior shrinkage is applied to k̂.
pub fn fit_generalized_pareto(excesses: &[f64]) -> Result<(f64, f64)> {
    let n = excesses.len();
    if n < MIN_TAIL {
        return Err(Error::TailTooSmall(n));
    }
    if excesses.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter("tail excesses must be positive and finite".into()));
    }
    let mut x = excesses.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let m = 30 + libm::sqrt(nf) as usize;
    let prior = 3.0;
    let xstar = x[((nf / 4.0 + 0.5) as usize).max(1) - 1];
    let xmax = x[n - 1];

    let mut theta = Vec::with_capacity(m);
    let mut lx = Vec::with_capacity(m);
    for j in 1..=m {
        let b = 1.0 / xmax + (1.0 - libm::sqrt(m as f64 / (j as f64 - 0.5))) / (prior * xstar);
        let k = x.iter().map(|v| libm::log1p(-b * v)).sum::<f64>() / nf;
        theta.push(b);
        lx.push(nf * (libm::log(-b / k) - k - 1.0));
    }
    let lse = math::log_sum_exp(&lx);
    let b_hat: f64 = theta.iter().zip(&lx).map(|(b, l)| b * libm::exp(l - lse)).sum();
    let k_hat = x.iter().map(|v| libm::log1p(-b_hat * v)).sum::<f64>() / nf;
    let sigma = -k_hat / b_hat;
    if !(k_hat.is_finite() && sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter("generalized Pareto fit did not converge".into()));
    }
    Ok((k_hat, sigma))
}

/// GPD quantile with shape `k`, scale `sigma` and zero location.
pub fn gpd_quantile(u: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * libm::log1p(-u)
    } else {
        sigma * libm::expm1(-k * libm::log1p(-u)) / k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsisResult {
    /// `+∞` when the tail is too heavy for the GPD fit.
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub k_hat: f64,
    pub tail_count: usize,
    /// Log of the smoothed weights, normalized to sum to one.
    pub smoothed_log_weights: Vec<f64>,
    pub normalized: bool,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub gpd_scale: f64,
    /// All weights (numerically) equal; `k_hat` is [`DEGENERATE_K_HAT`].
    pub degenerate: bool,
}

impl PsisResult {
    pub fn category(&self) -> KHatCategory {
        classify_k_hat(self.k_hat)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.smoothed_log_weights.iter().map(|v| libm::exp(*v)).collect()
    }
}

/// Tail size `min(⌈0.2 T⌉, ⌈3 √T⌉)`.
pub fn tail_size(t: usize) -> usize {
    let tf = t as f64;
    (libm::ceil(0.2 * tf) as usize).min(libm::ceil(3.0 * libm::sqrt(tf)) as usize)
}

fn normalize(lw: &mut [f64]) {
    let lse = math::log_sum_exp(lw);
    for v in lw.iter_mut() {
        *v -= lse;
    }
}

pub fn psis_smooth(log_weights: &[f64]) -> Result<PsisResult> {
    let t = log_weights.len();
    if t < MIN_DRAWS {
        return Err(Error::TooFewSamples { got: t, need: MIN_DRAWS });
    }
    if log_weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("log-weights must be finite".into()));
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_weights.iter().map(|v| v - max).collect();
    let m = tail_size(t);

    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
    let cutoff = lw[order[t - m - 1]];
    // Tail indices strictly above the cutoff, ascending.
    let tail: Vec<usize> = order[t - m..].iter().copied().filter(|&i| lw[i] > cutoff).collect();

    let spread = lw[order[t - 1]] - lw[order[0]];
    if spread <= 1e-12 * (1.0 + max.abs()) || tail.len() < MIN_TAIL {
        normalize(&mut lw);
        return Ok(PsisResult {
            k_hat: DEGENERATE_K_HAT,
            tail_count: m,
            smoothed_log_weights: lw,
            normalized: true,
            gpd_scale: f64::MIN_POSITIVE,
            degenerate: true,
        });
    }

    // Excesses are measured in units of exp(shift). The GPD shape is scale
    // invariant; the shift keeps both exp terms finite when the spread of
    // log-weights exceeds the double range.
    let shift = cutoff.max(-700.0);
    let base = libm::exp(cutoff - shift);
    let tail: Vec<(usize, f64)> = tail
        .iter()
        .map(|&i| {
            let x = if shift == cutoff { libm::expm1(lw[i] - cutoff) } else { libm::exp(lw[i] - shift) - base };
            (i, x)
        })
        .filter(|(_, x)| *x > 0.0 && x.is_finite())
        .collect();
    if tail.len() < MIN_TAIL {
        return Err(Error::TailTooSmall(tail.len()));
    }
    let excess: Vec<f64> = tail.iter().map(|t| t.1).collect();
    let (k_hat, sigma) = match fit_generalized_pareto(&excess) {
        Ok(fit) => fit,
        // Excesses spanning hundreds of orders of magnitude defeat the fit;
        // the tail is heavier than anything importance sampling can use.
        Err(Error::InvalidParameter(_)) => {
            normalize(&mut lw);
            return Ok(PsisResult {
                k_hat: f64::INFINITY,
                tail_count: m,
                smoothed_log_weights: lw,
                normalized: true,
                gpd_scale: f64::NAN,
                degenerate: false,
            });
        }
        Err(e) => return Err(e),
    };
    let n = tail.len();
    for (j, &(i, _)) in tail.iter().enumerate() {
        let q = gpd_quantile((j as f64 + 0.5) / n as f64, k_hat, sigma);
        // Map back and cap at the raw maximum (0).
        let smoothed = libm::log(q + base) + shift;
        lw[i] = smoothed.min(0.0);
    }
    normalize(&mut lw);
    Ok(PsisResult {
        k_hat,
        tail_count: m,
        smoothed_log_weights: lw,
        normalized: true,
        gpd_scale: sigma,
        degenerate: false,
    })
}

/// PSIS-weighted mean, covariance, standard deviation and MAD.
pub fn psis_expectation(batch: &SampleBatch, result: &PsisResult) -> Result<Moments> {
    if result.smoothed_log_weights.len() != batch.t {
        return Err(Error::DimensionMismatch { expected: batch.t, got: result.smoothed_log_weights.len() });
    }
    weighted_moments(&batch.draws, batch.d, Some(&result.weights()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use alloc::vec;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gpd_draws(k: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        (0..n).map(|_| gpd_quantile(rng.random::<f64>(), k, 1.0)).collect()
    }

    #[test]
    fn gpd_self_consistency() {
        for (k, lo, hi) in [(0.0, -0.05, 0.05), (0.5, 0.45, 0.55), (-0.2, -0.25, -0.15)] {
            let (kh, s) = fit_generalized_pareto(&gpd_draws(k, 10_000, 11)).unwrap();
            assert!(kh > lo && kh < hi, "k={k}: {kh}");
            assert!((s - 1.0).abs() < 0.1);
        }
        assert!(matches!(fit_generalized_pareto(&[1.0, 2.0, 3.0, 4.0]), Err(Error::TailTooSmall(4))));
    }

    #[test]
    fn uniform_weights_are_degenerate() {
        let r = psis_smooth(&[0.3; 100]).unwrap();
        assert!(r.degenerate && r.k_hat == DEGENERATE_K_HAT);
        for v in r.weights() {
            assert!((v - 0.01).abs() < 1e-15);
        }
        assert_eq!(r.category(), KHatCategory::Good);
    }

    #[test]
    fn smoothing_properties() {
        let mut rng = stream_rng(3, 0);
        let lw: Vec<f64> = (0..1000).map(|_| 1.5 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
        let r = psis_smooth(&lw).unwrap();
        assert_eq!(r.tail_count, tail_size(1000));
        assert_eq!(tail_size(1000), 95);
        let w = r.weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut idx: Vec<usize> = (0..1000).collect();
        idx.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
        for pair in idx[1000 - 95..].windows(2) {
            assert!(r.smoothed_log_weights[pair[0]] <= r.smoothed_log_weights[pair[1]]);
        }
    }

    #[test]
    fn k_hat_grows_with_lognormal_spread() {
        let mut means = vec![];
        for sigma in [0.5, 1.0, 1.5, 2.0, 3.0] {
            let mut acc = 0.0;
            for seed in 0..20 {
                let mut rng = stream_rng(100 + seed, 0);
                let lw: Vec<f64> = (0..2000).map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
                acc += psis_smooth(&lw).unwrap().k_hat;
            }
            means.push(acc / 20.0);
        }
        for w in means.windows(2) {
            assert!(w[0] < w[1], "{means:?}");
        }
    }

    #[test]
    fn thresholds() {
        assert_eq!(classify_k_hat(0.5), KHatCategory::Good);
        assert_eq!(classify_k_hat(0.7), KHatCategory::Acceptable);
        assert_eq!(classify_k_hat(0.71), KHatCategory::Unreliable);
    }

    #[test]
    fn huge_log_weight_spread() {
        let mut rng = stream_rng(8, 0);
        for sigma in [150.0, 900.0] {
            let lw: Vec<f64> = (0..2000).map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
            let r = psis_smooth(&lw).unwrap();
            assert!(r.k_hat > K_UNRELIABLE, "{sigma}: {}", r.k_hat);
            assert!((r.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_draws() {
        assert!(matches!(psis_smooth(&[0.0; 10]), Err(Error::TooFewSamples { .. })));
    }
}
