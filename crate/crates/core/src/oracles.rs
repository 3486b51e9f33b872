//! Ground truth used to score approximations and to audit the bounds:
//! exact Wasserstein distances, tensor quadrature for low-dimensional
//! posteriors, an adaptive random-walk Metropolis reference sampler, and the
//! mean/std/covariance error metrics.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::Scalar1D;
use crate::error::{invalid, Error, Result};
use crate::models::Target;
use crate::quadrature::{self, Integral, Tolerance};
use crate::rng::{stream_rng, streams};
use crate::summary::{spectral_norm, weighted_moments, Moments};

const W1D_TOL: Tolerance = Tolerance { abs: 1e-14, rel: 1e-10, max_intervals: 4000 };

/// `W_p(a, b)` through the quantile coupling `(∫₀¹ |Q_a(u) − Q_b(u)|^p du)^{1/p}`.
///
/// Each half of `(0, 1)` is mapped to `[0, ∞)` by `u = e^{−y}/2` (lower half
/// through the quantile, upper half through the inverse survival function),
/// which removes the endpoint singularities. Returns `+∞` when the integral
/// diverges.
pub fn wasserstein_1d(a: &Scalar1D, b: &Scalar1D, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid("order p must be a finite number >= 1"));
    }
    if a == b {
        return Ok(0.0);
    }
    let half = |upper: bool| {
        quadrature::integrate_upper(
            |y| {
                let u = 0.5 * libm::exp(-y);
                if u <= 0.0 {
                    return 0.0;
                }
                let (qa, qb) = if upper {
                    (a.isf(u), b.isf(u))
                } else {
                    (a.quantile(u), b.quantile(u))
                };
                match (qa, qb) {
                    (Ok(x), Ok(z)) => libm::pow((x - z).abs(), p) * u,
                    _ => f64::NAN,
                }
            },
            0.0,
            1.0,
            W1D_TOL,
        )
    };
    let total = match (half(false)?, half(true)?) {
        (Integral::Finite { value: l, .. }, Integral::Finite { value: h, .. }) => l + h,
        _ => return Ok(f64::INFINITY),
    };
    Ok(libm::pow(total.max(0.0), 1.0 / p))
}

fn symmetric_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let scale = sym.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|v| *v < -1e-10 * scale) {
        return Err(Error::NotPositiveDefinite);
    }
    let root = eig.eigenvalues.map(|v| libm::sqrt(v.max(0.0)));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
}

/// Closed-form `W₂` between Gaussians:
/// `‖μ₁ − μ₂‖² + tr(Σ₁ + Σ₂ − 2 (Σ₂^{1/2} Σ₁ Σ₂^{1/2})^{1/2})`.
pub fn wasserstein_gaussian(m1: &[f64], s1: &DMatrix<f64>, m2: &[f64], s2: &DMatrix<f64>) -> Result<f64> {
    let d = m1.len();
    for (len, what) in [(m2.len(), d), (s1.nrows(), d), (s1.ncols(), d), (s2.nrows(), d), (s2.ncols(), d)] {
        if len != what {
            return Err(Error::DimensionMismatch { expected: what, got: len });
        }
    }
    let r2 = symmetric_sqrt(s2)?;
    symmetric_sqrt(s1)?;
    let cross = symmetric_sqrt(&(&r2 * s1 * &r2))?;
    let dm: f64 = m1.iter().zip(m2).map(|(a, b)| (a - b) * (a - b)).sum();
    let w2 = dm + s1.trace() + s2.trace() - 2.0 * cross.trace();
    Ok(libm::sqrt(w2.max(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthMethod {
    ClosedForm,
    Quadrature,
    ReferenceMcmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub moments: Moments,
    pub method: GroundTruthMethod,
    /// Batch-means standard errors of the mean (reference sampler only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_error: Option<Vec<f64>>,
    /// `√‖Σ‖₂`.
    pub spectral_scale: f64,
    /// Log normalizing constant of the target (quadrature only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_normalizer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl GroundTruth {
    fn new(moments: Moments, method: GroundTruthMethod) -> Self {
        let spectral_scale = moments.spectral_scale();
        GroundTruth {
            moments,
            method,
            mc_error: None,
            spectral_scale,
            log_normalizer: None,
            acceptance_rate: None,
            warning: None,
        }
    }

    /// Gaussian ground truth; MAD is `σ √(2/π)` per coordinate.
    pub fn gaussian(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), got: cov.nrows() });
        }
        let std: Vec<f64> = (0..mean.len()).map(|i| libm::sqrt(cov[(i, i)])).collect();
        let mad = std.iter().map(|s| s * libm::sqrt(2.0 / crate::math::PI)).collect();
        Ok(GroundTruth::new(Moments { mean, cov, std, mad }, GroundTruthMethod::ClosedForm))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Initial panels per dimension.
    pub panels: usize,
    pub nodes_per_panel: usize,
    /// Initial half-width of the box in posterior standard deviations.
    pub sd_extent: f64,
    /// Largest mass allowed in the outermost layer of panels, relative to the total.
    pub boundary_tol: f64,
    pub max_expansions: usize,
    pub max_panels: usize,
    /// Agreement required between successive panel doublings, relative to
    /// the posterior scale.
    pub rel_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            panels: 16,
            nodes_per_panel: 10,
            sd_extent: 8.0,
            boundary_tol: 1e-10,
            max_expansions: 12,
            max_panels: 512,
            rel_tol: 1e-9,
        }
    }
}

/// Central-difference Hessian of the log density, built from gradients.
fn hessian(target: &dyn Target, theta: &[f64]) -> DMatrix<f64> {
    let d = theta.len();
    let mut h = DMatrix::zeros(d, d);
    let mut x = theta.to_vec();
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    for j in 0..d {
        let step = 1e-5 * (1.0 + theta[j].abs());
        x[j] = theta[j] + step;
        target.log_density_grad(&x, &mut gp);
        x[j] = theta[j] - step;
        target.log_density_grad(&x, &mut gm);
        x[j] = theta[j];
        for i in 0..d {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Damped Newton ascent to a mode. Returns the mode and the negative inverse
/// Hessian there (a Laplace covariance).
pub fn find_mode(target: &dyn Target, start: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = target.dim();
    if start.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: start.len() });
    }
    let mut x = start.to_vec();
    let mut g = vec![0.0; d];
    let mut lp = target.log_density_grad(&x, &mut g);
    if !lp.is_finite() {
        return Err(Error::NonFiniteLogDensity { point: x });
    }
    for _ in 0..200 {
        let neg_h = -hessian(target, &x);
        let gv = nalgebra::DVector::from_column_slice(&g);
        let dir = match neg_h.clone().cholesky() {
            Some(c) => c.solve(&gv),
            None => gv.clone(),
        };
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let y: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, b)| a + step * b).collect();
            let mut gy = vec![0.0; d];
            let ly = target.log_density_grad(&y, &mut gy);
            if ly.is_finite() && ly >= lp - 1e-12 * lp.abs().max(1.0) {
                moved = ly > lp || step == 1.0;
                x = y;
                g = gy;
                lp = ly;
                break;
            }
            step *= 0.5;
        }
        let gnorm = libm::sqrt(g.iter().map(|v| v * v).sum::<f64>());
        if gnorm < 1e-9 || !moved {
            break;
        }
    }
    let neg_h = -hessian(target, &x);
    let cov = neg_h.try_inverse().ok_or(Error::NotPositiveDefinite)?;
    if SymmetricEigen::new(cov.clone()).eigenvalues.iter().any(|v| *v <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok((x, cov))
}

struct GridResult {
    moments: Moments,
    log_z: f64,
    boundary_fraction: f64,
}

/// Tensor Gauss–Legendre over the box `centre ± half`, `panels` per dimension.
fn tensor_quadrature(
    target: &dyn Target,
    centre: &[f64],
    half: &[f64],
    panels: usize,
    nodes: usize,
    shift: f64,
) -> Result<GridResult> {
    let d = centre.len();
    let (gx, gw) = quadrature::gauss_legendre(nodes);
    // Per-dimension node lists with panel index.
    let axes: Vec<Vec<(f64, f64, usize)>> = (0..d)
        .map(|i| {
            let lo = centre[i] - half[i];
            let width = 2.0 * half[i] / panels as f64;
            let mut pts = Vec::with_capacity(panels * nodes);
            for pnl in 0..panels {
                let a = lo + pnl as f64 * width;
                for (x, w) in gx.iter().zip(&gw) {
                    pts.push((a + 0.5 * width * (x + 1.0), 0.5 * width * w, pnl));
                }
            }
            pts
        })
        .collect();
    let n_axis = panels * nodes;
    let total_points = n_axis.pow(d as u32);
    let mut points = Vec::with_capacity(total_points * d);
    let mut weights = Vec::with_capacity(total_points);
    let mut z = 0.0;
    let mut boundary = 0.0;
    let mut idx = vec![0usize; d];
    let mut theta = vec![0.0; d];
    for _ in 0..total_points {
        let mut w = 1.0;
        let mut on_edge = false;
        for k in 0..d {
            let (x, wk, pnl) = axes[k][idx[k]];
            theta[k] = x;
            w *= wk;
            on_edge |= pnl == 0 || pnl == panels - 1;
        }
        let lp = target.log_density(&theta);
        let mass = if lp.is_finite() { w * libm::exp(lp - shift) } else { 0.0 };
        if lp.is_nan() {
            return Err(Error::NonFiniteLogDensity { point: theta.clone() });
        }
        z += mass;
        if on_edge {
            boundary += mass;
        }
        points.extend_from_slice(&theta);
        weights.push(mass);
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < n_axis {
                break;
            }
            idx[k] = 0;
        }
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::QuadratureNonConvergence("posterior mass on the grid is zero or infinite".to_string()));
    }
    let moments = weighted_moments(&points, d, Some(&weights))?;
    Ok(GridResult { moments, log_z: libm::log(z) + shift, boundary_fraction: boundary / z })
}

fn moments_close(a: &Moments, b: &Moments, tol: f64) -> bool {
    let scale = b.std.iter().fold(0.0f64, |m, v| m.max(*v)).max(f64::MIN_POSITIVE);
    let mean_ok = a.mean.iter().zip(&b.mean).all(|(x, y)| (x - y).abs() <= tol * scale);
    let cov_ok = a.cov.iter().zip(b.cov.iter()).all(|(x, y)| (x - y).abs() <= tol * scale * scale);
    let mad_ok = a.mad.iter().zip(&b.mad).all(|(x, y)| (x - y).abs() <= 100.0 * tol * scale);
    mean_ok && cov_ok && mad_ok
}

/// Posterior moments of a target with `d ≤ 2` by tensor Gauss–Legendre
/// quadrature on a box around the mode. The box grows until the outermost
/// panel layer carries less than `boundary_tol` of the mass, and the panel
/// count doubles until successive results agree.
pub fn quadrature_posterior_moments(target: &dyn Target, config: &QuadratureConfig) -> Result<GroundTruth> {
    let d = target.dim();
    if d == 0 || d > 2 {
        return Err(Error::Unsupported(alloc::format!("quadrature ground truth needs 1 or 2 dimensions, got {d}")));
    }
    let (mode, laplace) = find_mode(target, &vec![0.0; d])?;
    let shift = target.log_density(&mode);
    let mut half: Vec<f64> = (0..d).map(|i| config.sd_extent * libm::sqrt(laplace[(i, i)])).collect();

    let mut grid = None;
    for _ in 0..=config.max_expansions {
        let g = tensor_quadrature(target, &mode, &half, config.panels, config.nodes_per_panel, shift)?;
        if g.boundary_fraction < config.boundary_tol {
            grid = Some(g);
            break;
        }
        half.iter_mut().for_each(|h| *h *= 1.5);
    }
    let mut coarse = grid.ok_or_else(|| {
        Error::QuadratureNonConvergence("box expansion did not bring the boundary mass below tolerance".to_string())
    })?;
    let mut panels = config.panels;
    loop {
        panels *= 2;
        if panels > config.max_panels {
            return Err(Error::QuadratureNonConvergence("panel refinement did not converge".to_string()));
        }
        // Centre on the current mean so that the |θ − μ| kink of the MAD
        // integrand sits on a panel edge (the panel count is even).
        let centre = coarse.moments.mean.clone();
        let fine = tensor_quadrature(target, &centre, &half, panels, config.nodes_per_panel, shift)?;
        if moments_close(&coarse.moments, &fine.moments, config.rel_tol) {
            let mut gt = GroundTruth::new(fine.moments, GroundTruthMethod::Quadrature);
            gt.log_normalizer = Some(fine.log_z);
            return Ok(gt);
        }
        coarse = fine;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Post-burn-in iterations per chain.
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    /// Starting point; the origin when absent.
    pub init: Option<Vec<f64>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { steps: 400_000, burn_in: 40_000, thin: 10, chains: 4, seed: 0, init: None }
    }
}

/// Acceptance target during adaptation.
pub const TARGET_ACCEPTANCE: f64 = 0.234;
/// Post-adaptation acceptance outside this range raises a warning.
pub const ACCEPTANCE_RANGE: (f64, f64) = (0.05, 0.6);

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    /// Thinned post-burn-in draws, row-major.
    pub draws: Vec<f64>,
    pub acceptance_rate: f64,
}

impl ChainOutput {
    /// Draws mapped through [`Target::to_reporting`].
    pub fn to_reporting(&self, target: &dyn Target) -> ChainOutput {
        let d = target.dim();
        let draws = self.draws.chunks_exact(d).flat_map(|row| target.to_reporting(row)).collect();
        ChainOutput { draws, acceptance_rate: self.acceptance_rate }
    }
}

/// One adaptive random-walk Metropolis chain. During burn-in the proposal is
/// `λ · s_i · z_i` with `s_i` the running marginal standard deviations (from
/// the second quarter of burn-in on) and `log λ` tuned by Robbins–Monro
/// toward 23.4% acceptance; afterwards the proposal is frozen.
pub fn run_chain(target: &dyn Target, config: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let d = target.dim();
    let mut rng = stream_rng(config.seed, streams::MCMC + chain as u64);
    let mut x = match &config.init {
        Some(v) if v.len() == d => v.clone(),
        Some(v) => return Err(Error::DimensionMismatch { expected: d, got: v.len() }),
        None => vec![0.0; d],
    };
    let mut lp = target.log_density(&x);
    if !lp.is_finite() {
        return Err(Error::NonFiniteLogDensity { point: x });
    }
    let thin = config.thin.max(1);
    let mut scale = vec![1.0; d];
    let mut log_lambda = libm::log(2.38 / libm::sqrt(d as f64));
    let (mut n_w, mut mean_w, mut m2_w) = (0usize, vec![0.0; d], vec![0.0; d]);
    let mut y = vec![0.0; d];
    let mut accepted = 0usize;
    let mut draws = Vec::with_capacity(config.steps / thin * d);
    let total = config.burn_in + config.steps;
    for it in 0..total {
        let lambda = libm::exp(log_lambda);
        for k in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            y[k] = x[k] + lambda * scale[k] * z;
        }
        let ly = target.log_density(&y);
        let log_ratio = if ly.is_finite() { ly - lp } else { f64::NEG_INFINITY };
        let u: f64 = rng.random();
        let accept = libm::log(u) < log_ratio;
        if accept {
            x.copy_from_slice(&y);
            lp = ly;
        }
        if it < config.burn_in {
            let a = if log_ratio >= 0.0 { 1.0 } else { libm::exp(log_ratio) };
            log_lambda += (a - TARGET_ACCEPTANCE) / libm::pow((it + 1) as f64, 0.6);
            if it >= config.burn_in / 4 {
                n_w += 1;
                for k in 0..d {
                    let delta = x[k] - mean_w[k];
                    mean_w[k] += delta / n_w as f64;
                    m2_w[k] += delta * (x[k] - mean_w[k]);
                }
                if n_w >= 1000 && n_w % 500 == 0 {
                    for k in 0..d {
                        scale[k] = libm::sqrt(m2_w[k] / (n_w - 1) as f64).max(1e-8);
                    }
                }
            }
        } else {
            if accept {
                accepted += 1;
            }
            if (it - config.burn_in) % thin == thin - 1 {
                draws.extend_from_slice(&x);
            }
        }
    }
    let acceptance_rate = if config.steps > 0 { accepted as f64 / config.steps as f64 } else { 0.0 };
    Ok(ChainOutput { draws, acceptance_rate })
}

/// Batch-means standard error of the mean of each coordinate of one chain.
fn batch_means_se(draws: &[f64], d: usize) -> Vec<f64> {
    let n = draws.len() / d;
    let b = (libm::sqrt(n as f64) as usize).max(1);
    let nb = n / b;
    if nb < 2 {
        return vec![f64::INFINITY; d];
    }
    (0..d)
        .map(|k| {
            let means: Vec<f64> = (0..nb)
                .map(|j| (0..b).map(|i| draws[(j * b + i) * d + k]).sum::<f64>() / b as f64)
                .collect();
            let (_, var) = crate::math::mean_var(&means);
            libm::sqrt(var / nb as f64)
        })
        .collect()
}

/// Pool chains into a ground truth with batch-means errors.
pub fn ground_truth_from_chains(chains: &[ChainOutput], d: usize) -> Result<GroundTruth> {
    if chains.is_empty() || chains.iter().any(|c| c.draws.len() < d) {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let pooled: Vec<f64> = chains.iter().flat_map(|c| c.draws.iter().copied()).collect();
    let moments = weighted_moments(&pooled, d, None)?;
    let c = chains.len() as f64;
    let mut se = vec![0.0; d];
    for ch in chains {
        for (s, e) in se.iter_mut().zip(batch_means_se(&ch.draws, d)) {
            *s += e * e;
        }
    }
    let se: Vec<f64> = se.into_iter().map(|v| libm::sqrt(v) / c).collect();
    let acceptance = chains.iter().map(|c| c.acceptance_rate).sum::<f64>() / c;
    let mut gt = GroundTruth::new(moments, GroundTruthMethod::ReferenceMcmc);
    gt.mc_error = Some(se);
    gt.acceptance_rate = Some(acceptance);
    if !(ACCEPTANCE_RANGE.0..=ACCEPTANCE_RANGE.1).contains(&acceptance) {
        gt.warning = Some(alloc::format!(
            "acceptance rate {acceptance:.3} outside [{}, {}] after adaptation",
            ACCEPTANCE_RANGE.0, ACCEPTANCE_RANGE.1
        ));
    }
    Ok(gt)
}

/// Sequential multi-chain reference sampler. Chains use disjoint RNG streams,
/// so running them in parallel through [`run_chain`] gives identical output.
pub fn reference_sampler(target: &dyn Target, config: &SamplerConfig) -> Result<GroundTruth> {
    let chains = (0..config.chains.max(1))
        .map(|c| run_chain(target, config, c))
        .collect::<Result<Vec<_>>>()?;
    ground_truth_from_chains(&chains, target.dim())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// `‖μ_π − μ_q‖₂`
    pub mean_error: f64,
    /// `‖σ_π − σ_q‖₂`
    pub std_error: f64,
    /// `‖Σ_π − Σ_q‖₂^{1/2}`
    pub cov_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psis_mean_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psis_std_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psis_cov_error: Option<f64>,
}

fn metric_triple(truth: &Moments, approx: &Moments) -> Result<(f64, f64, f64)> {
    if truth.dim() != approx.dim() {
        return Err(Error::DimensionMismatch { expected: truth.dim(), got: approx.dim() });
    }
    let l2 = |a: &[f64], b: &[f64]| libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum());
    let mean = l2(&truth.mean, &approx.mean);
    let std = l2(&truth.std, &approx.std);
    let cov = libm::sqrt(spectral_norm(&(&truth.cov - &approx.cov)));
    Ok((mean, std, cov))
}

pub fn error_metrics(truth: &Moments, approx: &Moments, psis: Option<&Moments>) -> Result<ErrorMetrics> {
    let (mean_error, std_error, cov_error) = metric_triple(truth, approx)?;
    let p = psis.map(|m| metric_triple(truth, m)).transpose()?;
    Ok(ErrorMetrics {
        mean_error,
        std_error,
        cov_error,
        psis_mean_error: p.map(|t| t.0),
        psis_std_error: p.map(|t| t.1),
        psis_cov_error: p.map(|t| t.2),
    })
}
