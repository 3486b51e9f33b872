//! Target posteriors on unconstrained space: eight schools (both
//! parameterizations), a Student-t robust regression, and a conjugate Gaussian
//! fixture with a known evidence.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::standard_t_draw;
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// The coordinate is the log of a positive parameter.
    Log,
}

/// An unnormalized log posterior with its gradient.
pub trait Target: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// `log π*(θ)`, including any transform Jacobian.
    fn log_density(&self, theta: &[f64]) -> f64;
    /// Returns `log π*(θ)` and writes its gradient into `grad`.
    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;
    fn transforms(&self) -> Vec<Transform> {
        vec![Transform::Identity; self.dim()]
    }
    fn coordinate_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("theta[{i}]")).collect()
    }
    /// Map to the coordinates used for reporting errors (identity by default).
    fn to_reporting(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }
}

/// Largest relative discrepancy between the analytic gradient and central
/// finite differences at `theta`.
pub fn gradient_check(target: &dyn Target, theta: &[f64], h: f64) -> f64 {
    let d = target.dim();
    let mut grad = vec![0.0; d];
    target.log_density_grad(theta, &mut grad);
    let mut worst: f64 = 0.0;
    let mut x = theta.to_vec();
    for i in 0..d {
        let step = h * theta[i].abs().max(1.0);
        x[i] = theta[i] + step;
        let up = target.log_density(&x);
        x[i] = theta[i] - step;
        let down = target.log_density(&x);
        x[i] = theta[i];
        let fd = (up - down) / (2.0 * step);
        let err = (fd - grad[i]).abs() / grad[i].abs().max(1.0);
        worst = worst.max(err);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EightSchoolsData {
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl EightSchoolsData {
    pub fn canonical() -> Self {
        Self {
            y: vec![28.0, 8.0, -3.0, 7.0, -1.0, 1.0, 18.0, 12.0],
            sigma: vec![15.0, 10.0, 16.0, 11.0, 9.0, 11.0, 10.0, 18.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.is_empty() || self.y.len() != self.sigma.len() {
            return Err(invalid("y and sigma must be non-empty and of equal length"));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0)) || self.y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sigma must be positive and y finite"));
        }
        Ok(())
    }
}

const MU_PRIOR_SD: f64 = 5.0;
const TAU_PRIOR_SCALE: f64 = 5.0;

/// Prior on (μ, log τ) including the log-Jacobian; adds gradient in place.
fn hyper_prior(mu: f64, log_tau: f64, grad: &mut [f64]) -> f64 {
    let tau = libm::exp(log_tau);
    let z = tau / TAU_PRIOR_SCALE;
    let lp_mu = math::std_normal_ln_pdf(mu / MU_PRIOR_SD) - libm::log(MU_PRIOR_SD);
    let lp_tau = core::f64::consts::LN_2 - math::LN_PI - libm::log(TAU_PRIOR_SCALE) - libm::log1p(z * z) + log_tau;
    grad[0] += -mu / (MU_PRIOR_SD * MU_PRIOR_SD);
    grad[1] += -2.0 * z * z / (1.0 + z * z) + 1.0;
    lp_mu + lp_tau
}

fn eight_schools_names(tilde: bool) -> Vec<String> {
    let mut names = vec![String::from("mu"), String::from("log_tau")];
    for i in 1..=8 {
        names.push(if tilde { format!("theta_tilde[{i}]") } else { format!("theta[{i}]") });
    }
    names
}

/// Centered eight schools over `(μ, log τ, θ₁..θ_J)`.
#[derive(Debug, Clone)]
pub struct EightSchoolsCentered {
    pub data: EightSchoolsData,
}

impl EightSchoolsCentered {
    pub fn new(data: EightSchoolsData) -> Result<Self> {
        data.validate()?;
        Ok(Self { data })
    }
}

impl Target for EightSchoolsCentered {
    fn name(&self) -> &str {
        "eight_schools_centered"
    }

    fn dim(&self) -> usize {
        2 + self.data.y.len()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_grad(theta, &mut g)
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (mu, log_tau) = (theta[0], theta[1]);
        let tau = libm::exp(log_tau);
        let inv_tau2 = libm::exp(-2.0 * log_tau);
        let mut lp = hyper_prior(mu, log_tau, grad);
        let n = self.data.y.len() as f64;
        let mut ss = 0.0;
        for (j, (&y, &s)) in self.data.y.iter().zip(&self.data.sigma).enumerate() {
            let th = theta[2 + j];
            let dev = th - mu;
            ss += dev * dev;
            lp += math::std_normal_ln_pdf((y - th) / s) - libm::log(s);
            grad[0] += dev * inv_tau2;
            grad[2 + j] = -dev * inv_tau2 + (y - th) / (s * s);
        }
        lp += -n * (0.5 * math::LN_2PI + libm::log(tau)) - 0.5 * ss * inv_tau2;
        grad[1] += -n + ss * inv_tau2;
        lp
    }

    fn transforms(&self) -> Vec<Transform> {
        let mut t = vec![Transform::Identity; self.dim()];
        t[1] = Transform::Log;
        t
    }

    fn coordinate_names(&self) -> Vec<String> {
        eight_schools_names(false)
    }
}

/// Non-centered eight schools over `(μ, log τ, θ̃₁..θ̃_J)` with
/// `θ_j = μ + τ θ̃_j`.
#[derive(Debug, Clone)]
pub struct EightSchoolsNonCentered {
    pub data: EightSchoolsData,
}

impl EightSchoolsNonCentered {
    pub fn new(data: EightSchoolsData) -> Result<Self> {
        data.validate()?;
        Ok(Self { data })
    }
}

impl Target for EightSchoolsNonCentered {
    fn name(&self) -> &str {
        "eight_schools_noncentered"
    }

    fn dim(&self) -> usize {
        2 + self.data.y.len()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_grad(theta, &mut g)
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (mu, log_tau) = (theta[0], theta[1]);
        let tau = libm::exp(log_tau);
        let mut lp = hyper_prior(mu, log_tau, grad);
        for (j, (&y, &s)) in self.data.y.iter().zip(&self.data.sigma).enumerate() {
            let tt = theta[2 + j];
            let resid = y - mu - tau * tt;
            let r = resid / (s * s);
            lp += math::std_normal_ln_pdf(tt) + math::std_normal_ln_pdf(resid / s) - libm::log(s);
            grad[0] += r;
            grad[1] += tau * tt * r;
            grad[2 + j] = -tt + tau * r;
        }
        lp
    }

    fn transforms(&self) -> Vec<Transform> {
        let mut t = vec![Transform::Identity; self.dim()];
        t[1] = Transform::Log;
        t
    }

    fn coordinate_names(&self) -> Vec<String> {
        eight_schools_names(true)
    }

    fn to_reporting(&self, theta: &[f64]) -> Vec<f64> {
        let tau = libm::exp(theta[1]);
        let mut out = theta.to_vec();
        for v in &mut out[2..] {
            *v = theta[0] + tau * *v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustRegressionData {
    /// Design matrix rows.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub true_beta: Vec<f64>,
    pub corr: f64,
    pub lik_df: f64,
    pub seed: u64,
}

/// Seed of the default robust-regression data set.
pub const ROBUST_REGRESSION_DEFAULT_SEED: u64 = 161_762;

impl RobustRegressionData {
    /// `n` rows with equicorrelated unit-variance Gaussian covariates and
    /// Student-t (`lik_df`) noise around `x·beta`.
    pub fn generate(n: usize, beta: &[f64], corr: f64, lik_df: f64, seed: u64) -> Result<Self> {
        let d = beta.len();
        if d == 0 {
            return Err(invalid("beta must be non-empty"));
        }
        if !(corr.abs() < 1.0) || (d > 1 && corr <= -1.0 / (d as f64 - 1.0)) {
            return Err(invalid(format!("correlation {corr} does not give a positive-definite covariance")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { corr });
        let l = cov.cholesky().ok_or(Error::NotPositiveDefinite)?.l();
        let mut rng = rng::stream_rng(seed, streams::DATA);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let row: Vec<f64> = (0..d).map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum()).collect();
            let noise = standard_t_draw(&mut rng, lik_df).0;
            y.push(row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + noise);
            x.push(row);
        }
        Ok(Self { x, y, true_beta: beta.to_vec(), corr, lik_df, seed })
    }

    /// The case-study data set: 25 rows, β = (−2, 1), correlation 0.75.
    pub fn default_case() -> Self {
        Self::generate(25, &[-2.0, 1.0], 0.75, 40.0, ROBUST_REGRESSION_DEFAULT_SEED)
            .unwrap_or_else(|_| unreachable!("constant arguments are valid"))
    }
}

#[derive(Debug, Clone)]
pub struct RobustRegression {
    pub data: RobustRegressionData,
    pub prior_sd: f64,
    pub lik_df: f64,
    dim: usize,
}

impl RobustRegression {
    pub fn new(data: RobustRegressionData, prior_sd: f64, lik_df: f64) -> Result<Self> {
        let dim = data.true_beta.len();
        if data.x.len() != data.y.len() || data.x.iter().any(|r| r.len() != dim) {
            return Err(invalid("design matrix and response dimensions disagree"));
        }
        if !(prior_sd > 0.0 && lik_df > 0.0) {
            return Err(invalid("prior_sd and lik_df must be positive"));
        }
        Ok(Self { data, prior_sd, lik_df, dim })
    }

    pub fn with_defaults(data: RobustRegressionData) -> Result<Self> {
        Self::new(data, 10.0, 40.0)
    }
}

impl Target for RobustRegression {
    fn name(&self) -> &str {
        "robust_regression"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim];
        self.log_density_grad(theta, &mut g)
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let v = self.lik_df;
        let s2 = self.prior_sd * self.prior_sd;
        let mut lp = 0.0;
        for (g, &t) in grad.iter_mut().zip(theta) {
            lp += math::std_normal_ln_pdf(t / self.prior_sd) - libm::log(self.prior_sd);
            *g = -t / s2;
        }
        for (row, &y) in self.data.x.iter().zip(&self.data.y) {
            let fit: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
            let r = y - fit;
            lp += math::student_t_ln_pdf(r, v);
            let psi = (v + 1.0) * r / (v + r * r);
            for (g, &a) in grad.iter_mut().zip(row) {
                *g += psi * a;
            }
        }
        lp
    }

    fn coordinate_names(&self) -> Vec<String> {
        (1..=self.dim).map(|i| format!("beta[{i}]")).collect()
    }
}

/// Gaussian prior `N(m0, S0)` with observations `y_j ~ N(θ, σ² I)`. The
/// posterior and the evidence are available in closed form.
#[derive(Debug, Clone)]
pub struct ConjugateGaussian {
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    prior_precision: DMatrix<f64>,
    prior_log_det: f64,
    noise_sd: f64,
    data: Vec<Vec<f64>>,
    data_sum: DVector<f64>,
    post_mean: DVector<f64>,
    post_cov: DMatrix<f64>,
    log_evidence: f64,
}

fn gaussian_log_pdf(x: &DVector<f64>, mean: &DVector<f64>, precision: &DMatrix<f64>, log_det_cov: f64) -> f64 {
    let diff = x - mean;
    let q = diff.dot(&(precision * &diff));
    -0.5 * (x.len() as f64 * math::LN_2PI + log_det_cov + q)
}

fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let c = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(2.0 * c.l().diagonal().iter().map(|v| libm::log(*v)).sum::<f64>())
}

impl ConjugateGaussian {
    pub fn new(prior_mean: Vec<f64>, prior_cov: DMatrix<f64>, noise_sd: f64, data: Vec<Vec<f64>>) -> Result<Self> {
        let d = prior_mean.len();
        if prior_cov.nrows() != d || prior_cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: prior_cov.nrows() });
        }
        if data.iter().any(|r| r.len() != d) {
            return Err(invalid("observation dimension differs from the prior"));
        }
        if !(noise_sd > 0.0) {
            return Err(invalid("noise_sd must be positive"));
        }
        let prior_mean = DVector::from_vec(prior_mean);
        let chol = prior_cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let prior_precision = chol.inverse();
        let prior_log_det = log_det_spd(&prior_cov)?;
        let n = data.len() as f64;
        let mut data_sum = DVector::zeros(d);
        for r in &data {
            data_sum += DVector::from_column_slice(r);
        }
        let s2 = noise_sd * noise_sd;
        let post_prec = &prior_precision + DMatrix::identity(d, d) * (n / s2);
        let post_cov = post_prec.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.inverse();
        let post_mean = &post_cov * (&prior_precision * &prior_mean + &data_sum / s2);
        let post_log_det = log_det_spd(&post_cov)?;
        let mut target = Self {
            prior_mean,
            prior_cov,
            prior_precision,
            prior_log_det,
            noise_sd,
            data,
            data_sum,
            post_mean,
            post_cov,
            log_evidence: 0.0,
        };
        // log M = log p(Y | θ*) + log p(θ*) − log p(θ* | Y) at any θ*.
        let at = target.post_mean.clone();
        let joint = target.log_density(at.as_slice());
        let post_prec_full = target.post_cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.inverse();
        target.log_evidence = joint - gaussian_log_pdf(&at, &target.post_mean, &post_prec_full, post_log_det);
        Ok(target)
    }

    /// A normalized Gaussian target `N(mean, cov)` (no observations, `log M = 0`).
    pub fn gaussian(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(mean, cov, 1.0, Vec::new())
    }

    pub fn posterior_mean(&self) -> &DVector<f64> {
        &self.post_mean
    }

    pub fn posterior_cov(&self) -> &DMatrix<f64> {
        &self.post_cov
    }

    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    /// Deterministic fixture: prior `N(0, 4 I)`, noise 1, `n` observations
    /// around a fixed truth.
    pub fn fixture(dim: usize, n: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::stream_rng(seed, streams::DATA);
        let truth: Vec<f64> = (0..dim).map(|i| 0.5 * i as f64 - 1.0).collect();
        let data = (0..n)
            .map(|_| {
                truth
                    .iter()
                    .map(|t| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        t + z
                    })
                    .collect()
            })
            .collect();
        Self::new(vec![0.0; dim], DMatrix::identity(dim, dim) * 4.0, 1.0, data)
    }
}

impl Target for ConjugateGaussian {
    fn name(&self) -> &str {
        "conjugate_gaussian"
    }

    fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_grad(theta, &mut g)
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim();
        let th = DVector::from_column_slice(theta);
        let diff = &th - &self.prior_mean;
        let pd = &self.prior_precision * &diff;
        let mut lp = -0.5 * (d as f64 * math::LN_2PI + self.prior_log_det + diff.dot(&pd));
        let s2 = self.noise_sd * self.noise_sd;
        let n = self.data.len() as f64;
        let mut ss = 0.0;
        for r in &self.data {
            for (a, b) in r.iter().zip(theta) {
                ss += (a - b) * (a - b);
            }
        }
        lp += -0.5 * n * d as f64 * (math::LN_2PI + libm::log(s2)) - 0.5 * ss / s2;
        for i in 0..d {
            grad[i] = -pd[i] + (self.data_sum[i] - n * theta[i]) / s2;
        }
        lp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn random_points(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = stream_rng(seed, 0);
        (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn eight_schools_data_statistics() {
        let d = EightSchoolsData::canonical();
        let m = d.y.iter().sum::<f64>() / 8.0;
        let sd = (d.y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 8.0).sqrt();
        assert!((sd - 9.8).abs() < 0.05, "{sd}");
        let mut s = d.sigma.clone();
        s.sort_by(f64::total_cmp);
        assert_eq!(0.5 * (s[3] + s[4]), 11.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let targets: Vec<alloc::boxed::Box<dyn Target>> = vec![
            alloc::boxed::Box::new(EightSchoolsCentered::new(EightSchoolsData::canonical()).unwrap()),
            alloc::boxed::Box::new(EightSchoolsNonCentered::new(EightSchoolsData::canonical()).unwrap()),
            alloc::boxed::Box::new(RobustRegression::with_defaults(RobustRegressionData::default_case()).unwrap()),
            alloc::boxed::Box::new(ConjugateGaussian::fixture(4, 5, 1).unwrap()),
        ];
        for t in &targets {
            for p in random_points(t.dim(), 100, 3) {
                let e = gradient_check(t.as_ref(), &p, 1e-5);
                assert!(e < 1e-5, "{}: {e}", t.name());
            }
        }
    }

    #[test]
    fn centered_and_noncentered_agree_under_change_of_variables() {
        let c = EightSchoolsCentered::new(EightSchoolsData::canonical()).unwrap();
        let nc = EightSchoolsNonCentered::new(EightSchoolsData::canonical()).unwrap();
        for p in random_points(10, 100, 4) {
            let mapped = nc.to_reporting(&p);
            let lhs = nc.log_density(&p);
            let rhs = c.log_density(&mapped) + 8.0 * p[1];
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn centered_density_collapses_as_tau_vanishes() {
        let c = EightSchoolsCentered::new(EightSchoolsData::canonical()).unwrap();
        let mut p = vec![0.0; 10];
        p[2] = 1.0;
        p[1] = -300.0;
        assert!(c.log_density(&p) < -1e200);
    }

    #[test]
    fn conjugate_update() {
        let t = ConjugateGaussian::new(vec![0.0], DMatrix::from_element(1, 1, 1.0), 1.0, vec![vec![0.0]]).unwrap();
        assert!(t.posterior_mean()[0].abs() < 1e-15);
        assert!((t.posterior_cov()[(0, 0)] - 0.5).abs() < 1e-15);
        // Evidence is N(y; 0, prior² + noise²).
        let exact = -0.5 * (math::LN_2PI + libm::log(2.0));
        assert!((t.log_evidence() - exact).abs() < 1e-12);
        let t = ConjugateGaussian::new(vec![1.0], DMatrix::from_element(1, 1, 4.0), 0.5, vec![vec![2.0]]).unwrap();
        let var = 4.0 + 0.25;
        let exact = -0.5 * (math::LN_2PI + libm::log(var) + 1.0 / var);
        assert!((t.log_evidence() - exact).abs() < 1e-12);
    }

    #[test]
    fn data_generation_is_deterministic_and_correlated() {
        let a = RobustRegressionData::generate(100_000, &[-2.0, 1.0], 0.75, 40.0, 3).unwrap();
        let b = RobustRegressionData::generate(100_000, &[-2.0, 1.0], 0.75, 40.0, 3).unwrap();
        assert_eq!(a, b);
        let n = a.x.len() as f64;
        let c00 = a.x.iter().map(|r| r[0] * r[0]).sum::<f64>() / n;
        let c01 = a.x.iter().map(|r| r[0] * r[1]).sum::<f64>() / n;
        assert!((c00 - 1.0).abs() < 0.02 && (c01 - 0.75).abs() < 0.02);
        let z = RobustRegressionData::generate(100_000, &[-2.0, 1.0], 0.0, 40.0, 3).unwrap();
        let c01 = z.x.iter().map(|r| r[0] * r[1]).sum::<f64>() / n;
        assert!(c01.abs() < 0.02);
        assert!(RobustRegressionData::generate(10, &[1.0, 1.0], 1.0, 40.0, 3).is_err());
    }
}
