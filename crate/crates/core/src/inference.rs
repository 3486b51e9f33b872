//! ELBO and CUBO estimators, their reparameterization gradients, and the
//! stochastic optimizers behind KLVI (maximize the ELBO) and CHIVI (minimize
//! the CUBO).

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::distributions::{FamilySpec, SampleBatch, ScaleParam, VariationalDistribution};
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::models::Target;
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectiveKind {
    Elbo,
    Cubo { alpha: f64 },
}

impl ObjectiveKind {
    pub fn cubo2() -> Self {
        ObjectiveKind::Cubo { alpha: 2.0 }
    }

    fn validate(self) -> Result<()> {
        match self {
            ObjectiveKind::Cubo { alpha } if !(alpha > 1.0 && alpha.is_finite()) => {
                Err(invalid("CUBO order alpha must exceed 1"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEstimate {
    pub kind: ObjectiveKind,
    pub value: f64,
    pub mc_std_error: f64,
    pub t: usize,
    pub seed: u64,
}

/// `log π*(θ_t) − log q(θ_t)` for every draw of the batch.
pub fn log_weights(target: &dyn Target, q: &VariationalDistribution, batch: &SampleBatch) -> Result<Vec<f64>> {
    let ld = q.log_det_scale();
    let mut out = Vec::with_capacity(batch.t);
    for i in 0..batch.t {
        let theta = batch.draw(i);
        let lp = target.log_density(theta);
        if !lp.is_finite() {
            return Err(Error::NonFiniteLogDensity { point: theta.to_vec() });
        }
        out.push(lp - (q.noise_log_density(batch.noise(i)) - ld));
    }
    Ok(out)
}

/// ELBO estimate from precomputed log-weights.
pub fn elbo_from_log_weights(lw: &[f64], seed: u64) -> ObjectiveEstimate {
    let (m, v) = math::mean_var(lw);
    ObjectiveEstimate {
        kind: ObjectiveKind::Elbo,
        value: m,
        mc_std_error: libm::sqrt(v / lw.len() as f64),
        t: lw.len(),
        seed,
    }
}

/// CUBO_α estimate from precomputed log-weights, with a delta-method error.
pub fn cubo_from_log_weights(lw: &[f64], alpha: f64, seed: u64) -> ObjectiveEstimate {
    let t = lw.len() as f64;
    let scaled: Vec<f64> = lw.iter().map(|v| alpha * v).collect();
    let lse = math::log_sum_exp(&scaled);
    let value = (lse - libm::log(t)) / alpha;
    // Relative standard error of the mean of exp(α·lw), via shifted weights.
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scaled.iter().map(|s| libm::exp(s - max)).collect();
    let (m, v) = math::mean_var(&w);
    let se = libm::sqrt(v / t) / m / alpha;
    ObjectiveEstimate { kind: ObjectiveKind::Cubo { alpha }, value, mc_std_error: se, t: lw.len(), seed }
}

fn check_t(t: usize, need: usize) -> Result<()> {
    if t < need {
        Err(Error::TooFewSamples { got: t, need })
    } else {
        Ok(())
    }
}

pub fn estimate_elbo(target: &dyn Target, q: &VariationalDistribution, t: usize, seed: u64) -> Result<ObjectiveEstimate> {
    check_t(t, 2)?;
    let batch = q.sample(t, seed);
    Ok(elbo_from_log_weights(&log_weights(target, q, &batch)?, seed))
}

pub fn estimate_cubo(
    target: &dyn Target,
    q: &VariationalDistribution,
    t: usize,
    seed: u64,
    alpha: f64,
) -> Result<ObjectiveEstimate> {
    check_t(t, 2)?;
    ObjectiveKind::Cubo { alpha }.validate()?;
    let batch = q.sample(t, seed);
    Ok(cubo_from_log_weights(&log_weights(target, q, &batch)?, alpha, seed))
}

/// Objective value and its gradient with respect to `q.params()` on a fixed
/// noise matrix (`t × d`, row-major).
pub fn objective_and_grad(
    target: &dyn Target,
    q: &VariationalDistribution,
    noise: &[f64],
    objective: ObjectiveKind,
) -> Result<(f64, Vec<f64>)> {
    let d = q.dim();
    let t = noise.len() / d;
    let np = q.n_params();
    let ld = q.log_det_scale();
    let mut theta = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut lw = Vec::with_capacity(t);
    let mut per_draw = Vec::with_capacity(t * np);
    for eps in noise.chunks_exact(d) {
        q.transform_noise(eps, &mut theta);
        let lp = target.log_density_grad(&theta, &mut g);
        if !lp.is_finite() {
            return Err(Error::NonFiniteLogDensity { point: theta.clone() });
        }
        lw.push(lp - (q.noise_log_density(eps) - ld));
        let start = per_draw.len();
        per_draw.extend_from_slice(&g);
        per_draw.resize(start + np, 0.0);
        let row = &mut per_draw[start..];
        match q.scale() {
            ScaleParam::Diagonal(s) => {
                for i in 0..d {
                    row[d + i] = g[i] * s[i] * eps[i] + 1.0;
                }
            }
            ScaleParam::Factor(l) => {
                let mut k = 2 * d;
                for i in 0..d {
                    row[d + i] = g[i] * l[i][i] * eps[i] + 1.0;
                    for j in 0..i {
                        row[k] = g[i] * eps[j];
                        k += 1;
                    }
                }
            }
        }
    }
    let mut grad = vec![0.0; np];
    let value = match objective {
        ObjectiveKind::Elbo => {
            for row in per_draw.chunks_exact(np) {
                for (a, b) in grad.iter_mut().zip(row) {
                    *a += b;
                }
            }
            grad.iter_mut().for_each(|v| *v /= t as f64);
            lw.iter().sum::<f64>() / t as f64
        }
        ObjectiveKind::Cubo { alpha } => {
            let scaled: Vec<f64> = lw.iter().map(|v| alpha * v).collect();
            let lse = math::log_sum_exp(&scaled);
            for (row, s) in per_draw.chunks_exact(np).zip(&scaled) {
                let w = libm::exp(s - lse);
                for (a, b) in grad.iter_mut().zip(row) {
                    *a += w * b;
                }
            }
            (lse - libm::log(t as f64)) / alpha
        }
    };
    if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient(alloc::format!("component {i} of {np} is {}", grad[i])));
    }
    Ok((value, grad))
}

/// Gradient of the ELBO or CUBO estimator on `t` draws with the given seed.
pub fn grad_estimate(
    target: &dyn Target,
    q: &VariationalDistribution,
    t: usize,
    seed: u64,
    objective: ObjectiveKind,
) -> Result<Vec<f64>> {
    check_t(t, 1)?;
    objective.validate()?;
    let batch = q.sample(t, seed);
    Ok(objective_and_grad(target, q, &batch.base_noise, objective)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Adam,
    RmsProp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub step_size: f64,
    pub iterations: usize,
    pub mc_samples_per_step: usize,
    /// Step-size multiplier applied at every quarter of the run.
    pub step_decay: f64,
    pub convergence_window: usize,
    pub relative_tolerance: f64,
    /// Half-life, in iterations, of the smoothed objective and parameters.
    pub smoothing_half_life: f64,
    pub init_scale: f64,
    pub seed: u64,
    /// CHIVI only: a known lower bound on `log M` (an ELBO). A smoothed CUBO
    /// below it can only be Monte Carlo bias, so the run stops there and
    /// returns the best iterate seen before.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cubo_floor: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Adam,
            step_size: 0.01,
            iterations: 10_000,
            mc_samples_per_step: 30,
            step_decay: 0.5,
            convergence_window: 500,
            relative_tolerance: 1e-4,
            smoothing_half_life: 50.0,
            init_scale: 1.0,
            seed: 0,
            cubo_floor: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid("step_size must be positive"));
        }
        if self.iterations == 0 || self.mc_samples_per_step == 0 || self.convergence_window == 0 {
            return Err(invalid("iterations, mc_samples_per_step and convergence_window must be positive"));
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(invalid("step_decay must lie in (0, 1]"));
        }
        if !(self.relative_tolerance > 0.0 && self.smoothing_half_life > 0.0 && self.init_scale > 0.0) {
            return Err(invalid("tolerance, smoothing half-life and init_scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub q: VariationalDistribution,
    pub objective: ObjectiveKind,
    /// `(iteration, smoothed objective)` for every iteration run.
    pub objective_trace: Vec<(usize, f64)>,
    pub converged: bool,
    pub iterations: usize,
    pub best_iteration: usize,
    pub best_smoothed_objective: f64,
    /// The CHIVI run was stopped by `cubo_floor`.
    #[serde(default)]
    pub stopped_at_floor: bool,
    pub config_echo: OptimizerConfig,
}

struct Stepper {
    algorithm: Algorithm,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Stepper {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const RMS_RHO: f64 = 0.9;
    const EPS: f64 = 1e-8;

    fn new(algorithm: Algorithm, n: usize) -> Self {
        Self { algorithm, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Descent step on `params` for the gradient `g` of a minimized objective.
    fn step(&mut self, params: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        match self.algorithm {
            Algorithm::Adam => {
                let c1 = 1.0 - libm::pow(Self::BETA1, self.t as f64);
                let c2 = 1.0 - libm::pow(Self::BETA2, self.t as f64);
                for i in 0..params.len() {
                    self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g[i];
                    self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                    params[i] -= lr * (self.m[i] / c1) / (libm::sqrt(self.v[i] / c2) + Self::EPS);
                }
            }
            Algorithm::RmsProp => {
                for i in 0..params.len() {
                    self.v[i] = Self::RMS_RHO * self.v[i] + (1.0 - Self::RMS_RHO) * g[i] * g[i];
                    params[i] -= lr * g[i] / (libm::sqrt(self.v[i]) + Self::EPS);
                }
            }
        }
    }
}

/// Fit a member of `family` by KLVI (`Elbo`) or CHIVI (`Cubo`), starting at
/// `init` or, if absent, at location 0 with scale `config.init_scale`.
pub fn fit(
    target: &dyn Target,
    family: FamilySpec,
    objective: ObjectiveKind,
    config: &OptimizerConfig,
    init: Option<&VariationalDistribution>,
) -> Result<FitResult> {
    config.validate()?;
    objective.validate()?;
    let d = target.dim();
    let q0 = match init {
        Some(q) => {
            if q.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: q.dim() });
            }
            q.clone()
        }
        None => family.initial(vec![0.0; d], config.init_scale)?,
    };
    let mut params = q0.params();
    let mut q = q0;
    let mut stepper = Stepper::new(config.algorithm, params.len());
    let mut rng = rng::stream_rng(config.seed, streams::OPTIMIZER);
    // Minimize `sign · objective`.
    let sign = match objective {
        ObjectiveKind::Elbo => -1.0,
        ObjectiveKind::Cubo { .. } => 1.0,
    };
    let decay_every = (config.iterations / 4).max(1);
    let smoothing = 1.0 - libm::exp2(-1.0 / config.smoothing_half_life);

    let mut trace: Vec<(usize, f64)> = Vec::with_capacity(config.iterations);
    let mut smoothed = f64::NAN;
    let mut smoothed_params = params.clone();
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut converged = false;
    let mut iterations = 0;
    let floor = match objective {
        ObjectiveKind::Cubo { .. } => config.cubo_floor,
        ObjectiveKind::Elbo => None,
    };
    let mut above_floor = (f64::INFINITY, 0usize, params.clone());
    let mut stopped_at_floor = false;

    for it in 0..config.iterations {
        let (noise, _) = q.draw_noise(config.mc_samples_per_step, &mut rng);
        let diverged = |trace: &Vec<(usize, f64)>| Error::Diverged {
            iteration: it,
            trace_prefix: trace.iter().take(50).cloned().collect(),
        };
        let (value, grad) = match objective_and_grad(target, &q, &noise, objective) {
            Ok(r) => r,
            Err(_) => return Err(diverged(&trace)),
        };
        if !value.is_finite() {
            return Err(diverged(&trace));
        }
        smoothed = if it == 0 { value } else { smoothed + smoothing * (value - smoothed) };
        trace.push((it, smoothed));
        iterations = it + 1;
        if let Some(f) = floor {
            if smoothed < f {
                stopped_at_floor = true;
                break;
            }
            if smoothed < above_floor.0 {
                above_floor = (smoothed, it, smoothed_params.clone());
            }
        }

        let lr = config.step_size * libm::pow(config.step_decay, (it / decay_every) as f64);
        let g: Vec<f64> = grad.iter().map(|v| sign * v).collect();
        stepper.step(&mut params, &g, lr);
        if params.iter().any(|v| !v.is_finite()) {
            return Err(diverged(&trace));
        }
        for (s, p) in smoothed_params.iter_mut().zip(&params) {
            *s += smoothing * (p - *s);
        }
        q = q.with_params(&params).map_err(|_| diverged(&trace))?;

        // Candidates come from the second half of the run, after at least one
        // step-size decay, so early noisy iterates are never selected.
        if it >= config.iterations / 2 && sign * smoothed < best.0 {
            best = (sign * smoothed, it, smoothed_params.clone());
        }
        let w = config.convergence_window;
        if it + 1 >= config.iterations / 2 && it + 1 >= 2 * w {
            let mean = |r: &[(usize, f64)]| r.iter().map(|x| x.1).sum::<f64>() / r.len() as f64;
            let recent = mean(&trace[it + 1 - w..]);
            let before = mean(&trace[it + 1 - 2 * w..it + 1 - w]);
            let change = (recent - before).abs() / recent.abs().max(1.0);
            if change < config.relative_tolerance {
                converged = true;
                break;
            }
        }
    }

    let (best_value, best_iteration, best_params) = if stopped_at_floor {
        above_floor
    } else if best.0.is_finite() {
        best
    } else {
        (sign * smoothed, iterations.saturating_sub(1), smoothed_params)
    };
    let q_best = q.with_params(&best_params)?;
    Ok(FitResult {
        q: q_best,
        objective,
        objective_trace: trace,
        converged,
        iterations,
        best_iteration,
        best_smoothed_objective: sign * best_value,
        stopped_at_floor,
        config_echo: config.clone(),
    })
}
