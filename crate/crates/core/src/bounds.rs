//! Moment constants, the ELBO/CUBO divergence bound, Wasserstein bounds and
//! the summary-error bounds they imply.
//!
//! Throughout, `ν` is the variational approximation whose moments are
//! computable and `η` is the (unknown) posterior; divergences are
//! `D(η ‖ ν)`. Infima over the centre `θ₀` and the exponential parameter `ε`
//! are replaced by evaluation at the variational mean and a minimum over a
//! 25-point log grid, which can only enlarge the constant.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::distributions::VariationalDistribution;
use crate::error::{invalid, Error, Result};
use crate::inference::{ObjectiveEstimate, ObjectiveKind};
use crate::math;
use crate::rng::streams;

/// Width of the ε grid used for every exponential-moment scan.
pub const EPSILON_GRID_POINTS: usize = 25;
/// Default number of standard errors added to δ̄ in the conservative variant.
pub const DEFAULT_Z: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MomentKind {
    /// `2 (E‖θ − θ₀‖^p)^{1/p}`
    Pic { p: f64 },
    /// `2 [(1/ε)(3/2 + log E e^{ε‖θ − θ₀‖^p})]^{1/p}`
    Eic { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentConstant {
    pub kind: MomentKind,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub value: f64,
    pub method: MomentMethod,
    pub theta0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::serde_ext::opt_ext_f64")]
    pub mc_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl MomentConstant {
    fn infinite(kind: MomentKind, method: MomentMethod, theta0: Vec<f64>, note: &str) -> Self {
        MomentConstant {
            kind,
            value: f64::INFINITY,
            method,
            theta0,
            epsilon: None,
            mc_error: None,
            note: Some(note.to_string()),
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(invalid("moment order p must be a finite number >= 1"))
    }
}

/// Whether `E‖θ‖^r` is finite for `q`.
fn polynomial_moment_finite(q: &VariationalDistribution, r: f64) -> bool {
    q.df().is_none_or(|h| h > r)
}

/// Analytic PIC for `p ∈ {2, 4}` at `θ₀ = loc`.
pub fn pic_analytic(q: &VariationalDistribution, p: u32) -> Result<MomentConstant> {
    let kind = MomentKind::Pic { p: p as f64 };
    let theta0 = q.loc().to_vec();
    if !polynomial_moment_finite(q, p as f64) {
        return Ok(MomentConstant::infinite(
            kind,
            MomentMethod::Analytic,
            theta0,
            "degrees of freedom do not exceed p; moment is infinite",
        ));
    }
    let value = match p {
        2 => 2.0 * libm::sqrt(q.central_second_moment()?),
        4 => 2.0 * libm::pow(q.central_fourth_moment(), 0.25),
        _ => return Err(Error::Unsupported(alloc::format!("analytic PIC only for p in {{2, 4}}, got {p}"))),
    };
    Ok(MomentConstant { kind, value, method: MomentMethod::Analytic, theta0, epsilon: None, mc_error: None, note: None })
}

/// Distances `‖θ_t − θ₀‖` of `t` draws from `q` on the moments stream.
fn draw_distances(q: &VariationalDistribution, t: usize, seed: u64, theta0: &[f64]) -> Result<Vec<f64>> {
    if theta0.len() != q.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), got: theta0.len() });
    }
    let batch = q.sample_stream(t, seed, streams::MOMENTS);
    Ok(batch
        .rows()
        .map(|row| libm::sqrt(row.iter().zip(theta0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
        .collect())
}

/// Monte Carlo `E‖θ − θ₀‖^r` with its standard error. `+∞` when the moment
/// does not exist.
pub fn central_moment_monte_carlo(
    q: &VariationalDistribution,
    r: f64,
    t: usize,
    seed: u64,
    theta0: Option<&[f64]>,
) -> Result<(f64, f64)> {
    if t < 2 {
        return Err(Error::TooFewSamples { got: t, need: 2 });
    }
    if !polynomial_moment_finite(q, r) {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let theta0 = theta0.unwrap_or(q.loc());
    let d = draw_distances(q, t, seed, theta0)?;
    let powered: Vec<f64> = d.iter().map(|v| libm::pow(*v, r)).collect();
    let (m, v) = math::mean_var(&powered);
    Ok((m, libm::sqrt(v / t as f64)))
}

/// `E‖θ − loc‖^r`, analytic for `r ∈ {2, 4}` and Monte Carlo otherwise.
pub fn central_moment(q: &VariationalDistribution, r: f64, t: usize, seed: u64) -> Result<(f64, MomentMethod)> {
    if !polynomial_moment_finite(q, r) {
        return Ok((f64::INFINITY, MomentMethod::Analytic));
    }
    if r == 2.0 {
        return Ok((q.central_second_moment()?, MomentMethod::Analytic));
    }
    if r == 4.0 {
        return Ok((q.central_fourth_moment(), MomentMethod::Analytic));
    }
    Ok((central_moment_monte_carlo(q, r, t, seed, None)?.0, MomentMethod::MonteCarlo))
}

pub fn pic_monte_carlo(
    q: &VariationalDistribution,
    p: f64,
    t: usize,
    seed: u64,
    theta0: Option<&[f64]>,
) -> Result<MomentConstant> {
    check_p(p)?;
    if t < 100 {
        return Err(Error::TooFewSamples { got: t, need: 100 });
    }
    let kind = MomentKind::Pic { p };
    let centre = theta0.unwrap_or(q.loc()).to_vec();
    let (m, se) = central_moment_monte_carlo(q, p, t, seed, Some(&centre))?;
    if !m.is_finite() {
        return Ok(MomentConstant::infinite(
            kind,
            MomentMethod::MonteCarlo,
            centre,
            "degrees of freedom do not exceed p; moment is infinite",
        ));
    }
    let value = 2.0 * libm::pow(m, 1.0 / p);
    // d/dm 2 m^{1/p} = (2/p) m^{1/p - 1}
    let err = 2.0 / p * libm::pow(m, 1.0 / p - 1.0) * se;
    Ok(MomentConstant {
        kind,
        value,
        method: MomentMethod::MonteCarlo,
        theta0: centre,
        epsilon: None,
        mc_error: Some(err),
        note: None,
    })
}

/// Where `E e^{ε‖θ − θ₀‖^s}` can be estimated with finite Monte Carlo variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonRange {
    /// Every `ε > 0`.
    Any,
    /// `0 < ε < max`.
    Below(f64),
    /// No `ε > 0` gives a finite value.
    Never,
}

fn largest_cov_eigenvalue(q: &VariationalDistribution) -> Result<f64> {
    let (_, cov) = q.moments()?;
    Ok(SymmetricEigen::new(cov).eigenvalues.iter().cloned().fold(0.0, f64::max))
}

/// Stability range for the exponential moment of power `s`.
///
/// Polynomial tails make it infinite for every power. For Gaussians,
/// `E e^{ε‖θ‖²}` is finite iff `ε < 1/(2λ)` and its square is integrable
/// iff `ε < 1/(4λ)`, with `λ` the largest covariance eigenvalue; powers above
/// two are never integrable and powers below two always are.
pub fn epsilon_range(q: &VariationalDistribution, s: f64) -> Result<EpsilonRange> {
    if q.kind().is_t() {
        return Ok(EpsilonRange::Never);
    }
    if s < 2.0 {
        Ok(EpsilonRange::Any)
    } else if s == 2.0 {
        Ok(EpsilonRange::Below(0.25 / largest_cov_eigenvalue(q)?))
    } else {
        Ok(EpsilonRange::Never)
    }
}

/// Log-spaced ε grid for exponential moments of power `s`.
pub fn epsilon_grid(q: &VariationalDistribution, s: f64) -> Result<Vec<f64>> {
    let (lo, hi) = match epsilon_range(q, s)? {
        EpsilonRange::Never => return Ok(Vec::new()),
        EpsilonRange::Below(max) => (1e-3 * max, 0.9 * max),
        EpsilonRange::Any => {
            // Put ε‖θ‖^s on the unit scale, with ‖θ‖ measured by √tr Σ.
            let r = libm::sqrt(q.central_second_moment()?).max(f64::MIN_POSITIVE);
            let unit = 1.0 / libm::pow(r, s);
            (1e-2 * unit, 1e1 * unit)
        }
    };
    let n = EPSILON_GRID_POINTS;
    let step = libm::log(hi / lo) / (n - 1) as f64;
    Ok((0..n).map(|i| lo * libm::exp(step * i as f64)).collect())
}

/// Monte Carlo `K(ε) = log E e^{ε‖θ − θ₀‖^s}` on precomputed distances,
/// with a delta-method standard error.
fn log_exp_moment(dist: &[f64], s: f64, eps: f64) -> (f64, f64) {
    let e: Vec<f64> = dist.iter().map(|r| eps * libm::pow(*r, s)).collect();
    let k = math::log_mean_exp(&e);
    let max = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = e.iter().map(|v| libm::exp(v - max)).collect();
    let (m, v) = math::mean_var(&w);
    (k, libm::sqrt(v / dist.len() as f64) / m)
}

/// Exponential-moment estimates `K(ε)` on one draw set, shared across ε.
#[derive(Debug, Clone)]
pub struct ExpMomentSampler {
    power: f64,
    range: EpsilonRange,
    theta0: Vec<f64>,
    dist: Vec<f64>,
}

impl ExpMomentSampler {
    pub fn new(q: &VariationalDistribution, power: f64, t: usize, seed: u64, theta0: Option<&[f64]>) -> Result<Self> {
        if t < 100 {
            return Err(Error::TooFewSamples { got: t, need: 100 });
        }
        if !(power > 0.0) {
            return Err(invalid("exponential-moment power must be positive"));
        }
        let theta0 = theta0.unwrap_or(q.loc()).to_vec();
        let range = epsilon_range(q, power)?;
        let dist = match range {
            EpsilonRange::Never => Vec::new(),
            _ => draw_distances(q, t, seed, &theta0)?,
        };
        Ok(ExpMomentSampler { power, range, theta0, dist })
    }

    pub fn range(&self) -> EpsilonRange {
        self.range
    }

    /// `(K(ε), standard error)`; `+∞` outside the finite range, an error
    /// when the estimator variance is not finite.
    pub fn log_moment(&self, eps: f64) -> Result<(f64, f64)> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid("epsilon must be positive and finite"));
        }
        match self.range {
            EpsilonRange::Never => Ok((f64::INFINITY, f64::INFINITY)),
            EpsilonRange::Below(max) if eps >= max => Err(Error::UnstableEpsilon { epsilon: eps, max_stable: max }),
            _ => Ok(log_exp_moment(&self.dist, self.power, eps)),
        }
    }
}

fn eic_from_k(p: f64, eps: f64, k: f64, k_se: f64) -> (f64, f64) {
    let inner = (1.5 + k) / eps;
    let value = 2.0 * libm::pow(inner, 1.0 / p);
    let err = 2.0 / p * libm::pow(inner, 1.0 / p - 1.0) / eps * k_se;
    (value, err)
}

/// EIC of order `p` at a fixed `ε`.
pub fn eic_monte_carlo(
    q: &VariationalDistribution,
    p: f64,
    eps: f64,
    t: usize,
    seed: u64,
    theta0: Option<&[f64]>,
) -> Result<MomentConstant> {
    check_p(p)?;
    let sampler = ExpMomentSampler::new(q, p, t, seed, theta0)?;
    eic_at(&sampler, p, eps)
}

fn eic_at(sampler: &ExpMomentSampler, p: f64, eps: f64) -> Result<MomentConstant> {
    let kind = MomentKind::Eic { p };
    let (k, se) = sampler.log_moment(eps)?;
    if !k.is_finite() {
        let mut c = MomentConstant::infinite(
            kind,
            MomentMethod::MonteCarlo,
            sampler.theta0.clone(),
            "exponential moment is infinite for this family and order",
        );
        c.epsilon = Some(eps);
        return Ok(c);
    }
    let (value, err) = eic_from_k(p, eps, k, se);
    Ok(MomentConstant {
        kind,
        value,
        method: MomentMethod::MonteCarlo,
        theta0: sampler.theta0.clone(),
        epsilon: Some(eps),
        mc_error: Some(err),
        note: None,
    })
}

/// EIC of order `p` minimized over the ε grid. Returns the minimizing
/// constant together with the value at every grid point.
pub fn eic_scan(
    q: &VariationalDistribution,
    p: f64,
    t: usize,
    seed: u64,
    theta0: Option<&[f64]>,
) -> Result<(MomentConstant, Vec<(f64, f64)>)> {
    check_p(p)?;
    let sampler = ExpMomentSampler::new(q, p, t, seed, theta0)?;
    let grid = epsilon_grid(q, p)?;
    if grid.is_empty() {
        return Ok((
            MomentConstant::infinite(
                MomentKind::Eic { p },
                MomentMethod::MonteCarlo,
                sampler.theta0.clone(),
                "exponential moment is infinite for this family and order",
            ),
            Vec::new(),
        ));
    }
    let mut best: Option<MomentConstant> = None;
    let mut trace = Vec::with_capacity(grid.len());
    for eps in grid {
        let c = eic_at(&sampler, p, eps)?;
        trace.push((eps, c.value));
        if best.as_ref().is_none_or(|b| c.value < b.value) {
            best = Some(c);
        }
    }
    Ok((best.expect("grid is non-empty"), trace))
}

/// `δ̄_α = (α/(α−1)) (CUBO_α − ELBO)` with its propagated Monte Carlo error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceBound {
    pub alpha: f64,
    pub delta_bar: f64,
    pub cubo: ObjectiveEstimate,
    pub elbo: ObjectiveEstimate,
    /// Standard error of `delta_bar`.
    pub combined_mc_error: f64,
}

impl DivergenceBound {
    /// δ̄ as fed into the Wasserstein bounds: the point estimate plus `z`
    /// standard errors, clamped at zero.
    pub fn for_bounds(&self, z: f64) -> f64 {
        (self.delta_bar + z * self.combined_mc_error).max(0.0)
    }
}

/// Number of combined standard errors by which CUBO may fall below the ELBO
/// before the pair is rejected.
pub const INCONSISTENCY_SIGMAS: f64 = 6.0;

pub fn divergence_bound(cubo: ObjectiveEstimate, elbo: ObjectiveEstimate) -> Result<DivergenceBound> {
    let alpha = match (cubo.kind, elbo.kind) {
        (ObjectiveKind::Cubo { alpha }, ObjectiveKind::Elbo) => alpha,
        _ => return Err(invalid("divergence bound needs a CUBO estimate and an ELBO estimate")),
    };
    if !(alpha > 1.0) {
        return Err(invalid("CUBO order alpha must exceed 1"));
    }
    let se = libm::sqrt(cubo.mc_std_error * cubo.mc_std_error + elbo.mc_std_error * elbo.mc_std_error);
    let gap = cubo.value - elbo.value;
    if !gap.is_finite() {
        return Err(Error::NonFiniteGradient("CUBO or ELBO estimate is not finite".to_string()));
    }
    if gap < -INCONSISTENCY_SIGMAS * se {
        return Err(Error::EstimatorInconsistency {
            cubo: cubo.value,
            elbo: elbo.value,
            tolerance: INCONSISTENCY_SIGMAS * se,
        });
    }
    let factor = alpha / (alpha - 1.0);
    Ok(DivergenceBound { alpha, delta_bar: factor * gap, cubo, elbo, combined_mc_error: factor * se })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum WassersteinMethod {
    Pi,
    Ei,
    PolyQ { alpha: f64 },
    SqrtEi { alpha: f64 },
    Ei2p,
}

impl WassersteinMethod {
    pub fn name(&self) -> &'static str {
        match self {
            WassersteinMethod::Pi => "pi",
            WassersteinMethod::Ei => "ei",
            WassersteinMethod::PolyQ { .. } => "poly_q",
            WassersteinMethod::SqrtEi { .. } => "sqrt_ei",
            WassersteinMethod::Ei2p => "ei2p",
        }
    }
}

/// Everything a bound consumed. Unused fields stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// PIC, EIC or the combined constant `C`, as it enters the final product.
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::serde_ext::opt_ext_f64")]
    pub kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::serde_ext::opt_ext_f64")]
    pub d_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// `log E e^{ε‖θ − θ₀‖^s}` at `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::serde_ext::opt_ext_f64")]
    pub log_exp_moment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::serde_ext::opt_ext_f64")]
    pub moment_2p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::serde_ext::opt_ext_f64")]
    pub moment_2pq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinBound {
    pub p: f64,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub value: f64,
    pub method: WassersteinMethod,
    pub inputs: BoundInputs,
}

fn check_divergence(x: f64, what: &str) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(invalid(alloc::format!("{what} bound must be non-negative, got {x}")))
    }
}

/// `constant · g(div)` where a zero divergence always gives zero and an
/// infinite constant otherwise gives `+∞`.
fn product(constant: f64, factor: f64) -> f64 {
    if factor == 0.0 {
        0.0
    } else if !constant.is_finite() || !factor.is_finite() {
        f64::INFINITY
    } else {
        constant * factor
    }
}

/// `PIC_{2p} (e^{δ} − 1)^{1/(2p)}` with `δ` a bound on `D₂`.
pub fn wasserstein_bound_pi(pic_2p: f64, delta: f64, p: f64) -> Result<WassersteinBound> {
    check_p(p)?;
    check_divergence(delta, "2-divergence")?;
    let factor = libm::pow(libm::expm1(delta), 1.0 / (2.0 * p));
    Ok(WassersteinBound {
        p,
        value: product(pic_2p, factor),
        method: WassersteinMethod::Pi,
        inputs: BoundInputs { constant: pic_2p, d_alpha: Some(delta), ..Default::default() },
    })
}

/// `EIC_p (KL^{1/p} + (KL/2)^{1/(2p)})`.
pub fn wasserstein_bound_ei(eic_p: f64, kl: f64, p: f64) -> Result<WassersteinBound> {
    check_p(p)?;
    check_divergence(kl, "KL")?;
    let factor = libm::pow(kl, 1.0 / p) + libm::pow(kl / 2.0, 1.0 / (2.0 * p));
    Ok(WassersteinBound {
        p,
        value: product(eic_p, factor),
        method: WassersteinMethod::Ei,
        inputs: BoundInputs { constant: eic_p, kl: Some(kl), ..Default::default() },
    })
}

/// Constant of the polynomial-moment bound with conjugate exponent
/// `q = α/(α−1)`:
/// `[m_{2p}^{1/2} + (m_{2pq}/(2^{2q−2} q) + 4 e^{(α−1)D_α}/α)^{1/2}]^{1/p}`.
pub fn poly_q_constant(alpha: f64, moment_2p: f64, moment_2pq: f64, d_alpha: f64, p: f64) -> f64 {
    let q = alpha / (alpha - 1.0);
    let second = moment_2pq / (libm::pow(2.0, 2.0 * q - 2.0) * q) + 4.0 * libm::exp((alpha - 1.0) * d_alpha) / alpha;
    libm::pow(libm::sqrt(moment_2p) + libm::sqrt(second), 1.0 / p)
}

/// `2 C KL^{1/(2p)}` with `C` from [`poly_q_constant`].
pub fn wasserstein_bound_poly_q(
    alpha: f64,
    moment_2p: f64,
    moment_2pq: f64,
    d_alpha: f64,
    kl: f64,
    p: f64,
) -> Result<WassersteinBound> {
    check_p(p)?;
    if !(alpha > 1.0) {
        return Err(invalid("alpha must exceed 1"));
    }
    check_divergence(kl, "KL")?;
    check_divergence(d_alpha, "alpha-divergence")?;
    let c = poly_q_constant(alpha, moment_2p, moment_2pq, d_alpha, p);
    Ok(WassersteinBound {
        p,
        value: product(2.0 * c, libm::pow(kl, 1.0 / (2.0 * p))),
        method: WassersteinMethod::PolyQ { alpha },
        inputs: BoundInputs {
            constant: c,
            kl: Some(kl),
            d_alpha: Some(d_alpha),
            moment_2p: Some(moment_2p),
            moment_2pq: Some(moment_2pq),
            ..Default::default()
        },
    })
}

/// Constant of the square-root exponential bound at a fixed `ε`:
/// `{(3·2^p/ε²)[(3α/(α−1))² + 6 + 2K² + D_α²]}^{1/p}` with
/// `K = log E e^{ε‖θ − θ₀‖^{p/2}}`.
pub fn sqrt_ei_constant(alpha: f64, k: f64, d_alpha: f64, p: f64, eps: f64) -> f64 {
    let r = 3.0 * alpha / (alpha - 1.0);
    let inner = 3.0 * libm::pow(2.0, p) / (eps * eps) * (r * r + 6.0 + 2.0 * k * k + d_alpha * d_alpha);
    libm::pow(inner, 1.0 / p)
}

pub fn wasserstein_bound_sqrt_ei(
    alpha: f64,
    k: f64,
    d_alpha: f64,
    kl: f64,
    p: f64,
    eps: f64,
) -> Result<WassersteinBound> {
    check_p(p)?;
    if !(alpha > 1.0) {
        return Err(invalid("alpha must exceed 1"));
    }
    check_divergence(kl, "KL")?;
    check_divergence(d_alpha, "alpha-divergence")?;
    let c = sqrt_ei_constant(alpha, k, d_alpha, p, eps);
    Ok(WassersteinBound {
        p,
        value: product(c, libm::pow(kl, 1.0 / (2.0 * p))),
        method: WassersteinMethod::SqrtEi { alpha },
        inputs: BoundInputs {
            constant: c,
            kl: Some(kl),
            d_alpha: Some(d_alpha),
            epsilon: Some(eps),
            log_exp_moment: Some(k),
            ..Default::default()
        },
    })
}

/// Square-root exponential bound minimized over the ε grid.
pub fn wasserstein_bound_sqrt_ei_scan(
    q: &VariationalDistribution,
    alpha: f64,
    d_alpha: f64,
    kl: f64,
    p: f64,
    t: usize,
    seed: u64,
) -> Result<WassersteinBound> {
    check_p(p)?;
    let sampler = ExpMomentSampler::new(q, p / 2.0, t, seed, None)?;
    let grid = epsilon_grid(q, p / 2.0)?;
    let mut best: Option<WassersteinBound> = None;
    for eps in grid {
        let (k, _) = sampler.log_moment(eps)?;
        let b = wasserstein_bound_sqrt_ei(alpha, k, d_alpha, kl, p, eps)?;
        if best.as_ref().is_none_or(|c| b.inputs.constant < c.inputs.constant) {
            best = Some(b);
        }
    }
    match best {
        Some(b) => Ok(b),
        None => wasserstein_bound_sqrt_ei(alpha, f64::INFINITY, d_alpha, kl, p, 1.0),
    }
}

/// Constant `2 [(1 + K)/(2ε)]^{1/(2p)}` of the order-`2p` exponential bound at
/// one ε, where `K = log E e^{ε‖θ − θ₀‖^{2p}}`.
pub fn ei2p_constant(k: f64, p: f64, eps: f64) -> f64 {
    2.0 * libm::pow((1.0 + k) / (2.0 * eps), 1.0 / (2.0 * p))
}

/// `C KL^{1/(2p)}` with `C` the grid minimum of [`ei2p_constant`]. `scan`
/// holds `(ε, K(ε))` pairs.
pub fn wasserstein_bound_ei2p(scan: &[(f64, f64)], kl: f64, p: f64) -> Result<WassersteinBound> {
    check_p(p)?;
    check_divergence(kl, "KL")?;
    let mut best = (f64::INFINITY, None, None);
    for &(eps, k) in scan {
        let c = ei2p_constant(k, p, eps);
        if c < best.0 {
            best = (c, Some(eps), Some(k));
        }
    }
    Ok(WassersteinBound {
        p,
        value: product(best.0, libm::pow(kl, 1.0 / (2.0 * p))),
        method: WassersteinMethod::Ei2p,
        inputs: BoundInputs { constant: best.0, kl: Some(kl), epsilon: best.1, log_exp_moment: best.2, ..Default::default() },
    })
}

/// `(ε, K(ε))` over the grid for the order-`2p` exponential moment; empty
/// when that moment is infinite.
pub fn ei2p_scan(q: &VariationalDistribution, p: f64, t: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    check_p(p)?;
    let sampler = ExpMomentSampler::new(q, 2.0 * p, t, seed, None)?;
    epsilon_grid(q, 2.0 * p)?.into_iter().map(|eps| Ok((eps, sampler.log_moment(eps)?.0))).collect()
}

/// Error bounds on posterior summaries implied by `W₁ ≤ w1` and `W₂ ≤ w2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryErrorBounds {
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub mean_bound: f64,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub mad_bound: f64,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub std_bound: f64,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub cov_bound: f64,
    /// Square root of the spectral norm used in the covariance bound.
    pub s: f64,
}

/// Mean error ≤ min(w1, w2), MAD error ≤ 2 min(w1, w2), standard-deviation
/// error ≤ w2 and covariance error (spectral norm) ≤ 2 w2 (S + w2).
pub fn summary_error_bounds(w1: Option<f64>, w2: Option<f64>, s: f64) -> Result<SummaryErrorBounds> {
    if w1.is_none() && w2.is_none() {
        return Err(invalid("summary bounds need at least one Wasserstein bound"));
    }
    if !(s >= 0.0) {
        return Err(invalid("scale S must be non-negative"));
    }
    for w in [w1, w2].into_iter().flatten() {
        if !(w >= 0.0) {
            return Err(invalid("Wasserstein bounds must be non-negative"));
        }
    }
    let inf = f64::INFINITY;
    let m = w1.unwrap_or(inf).min(w2.unwrap_or(inf));
    let (std_bound, cov_bound) = match w2 {
        Some(w) => (w, if w == 0.0 { 0.0 } else { 2.0 * w * (s + w) }),
        None => (inf, inf),
    };
    Ok(SummaryErrorBounds { mean_bound: m, mad_bound: 2.0 * m, std_bound, cov_bound, s })
}

/// `√‖Σ‖₂` of the approximation, the default `S` for [`summary_error_bounds`].
pub fn spectral_scale(q: &VariationalDistribution) -> Result<f64> {
    Ok(libm::sqrt(largest_cov_eigenvalue(q)?))
}

/// `W_p` between posterior predictives, given a likelihood whose
/// parameter-to-predictive map is `c_lip`-Lipschitz in `W_p`.
pub fn predictive_bound(c_lip: f64, w_p: f64) -> Result<f64> {
    if !(c_lip >= 0.0) {
        return Err(invalid("Lipschitz constant must be non-negative"));
    }
    Ok(product(c_lip, w_p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::{kl_gaussians, renyi_gaussians};
    use alloc::vec;
    use nalgebra::DMatrix;

    fn mfg(s: f64) -> VariationalDistribution {
        VariationalDistribution::mean_field_gaussian(vec![0.0], vec![s]).unwrap()
    }

    fn est(kind: ObjectiveKind, value: f64, se: f64) -> ObjectiveEstimate {
        ObjectiveEstimate { kind, value, mc_std_error: se, t: 100, seed: 0 }
    }

    #[test]
    fn pic_examples() {
        assert!((pic_analytic(&mfg(1.0), 2).unwrap().value - 2.0).abs() < 1e-14);
        let t = VariationalDistribution::mean_field_t(vec![0.0], vec![1.0], 40.0).unwrap();
        let v = pic_analytic(&t, 2).unwrap().value;
        assert!((v - 2.0 * (40.0f64 / 38.0).sqrt()).abs() < 1e-12);
        assert!((v - 2.0519).abs() < 1e-4);
        let t4 = VariationalDistribution::mean_field_t(vec![0.0], vec![1.0], 4.0).unwrap();
        assert!(pic_analytic(&t4, 4).unwrap().value.is_infinite());
        assert!(pic_analytic(&t4, 2).unwrap().value.is_finite());
    }

    #[test]
    fn pic4_matches_monte_carlo() {
        let qs = [
            VariationalDistribution::mean_field_t(vec![1.0, -1.0, 0.0], vec![0.5, 1.0, 2.0], 40.0).unwrap(),
            VariationalDistribution::full_rank_gaussian(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.8, 0.4]]).unwrap(),
            VariationalDistribution::full_rank_t(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.8, 0.4]], 12.0).unwrap(),
        ];
        for q in &qs {
            let a = pic_analytic(q, 4).unwrap().value;
            let mc = pic_monte_carlo(q, 4.0, 1_000_000, 3, None).unwrap();
            let err = mc.mc_error.unwrap();
            assert!((a - mc.value).abs() < 3.0 * err, "{a} vs {} ± {err}", mc.value);
        }
    }

    #[test]
    fn pic_monte_carlo_offset_and_homogeneity() {
        let q = VariationalDistribution::mean_field_gaussian(vec![1.0, 2.0], vec![1.0, 0.5]).unwrap();
        let base = pic_monte_carlo(&q, 2.0, 20_000, 1, None).unwrap().value;
        let off = pic_monte_carlo(&q, 2.0, 20_000, 1, Some(&[1.5, 2.5])).unwrap().value;
        assert!(off > base);
        let scaled = pic_monte_carlo(&q.scaled(3.0).unwrap(), 2.0, 20_000, 1, None).unwrap().value;
        assert!((scaled - 3.0 * base).abs() < 1e-9 * scaled);
        assert!(matches!(pic_monte_carlo(&q, 2.0, 50, 1, None), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn eic_gaussian_mgf() {
        let q = mfg(1.0);
        let s = ExpMomentSampler::new(&q, 2.0, 200_000, 5, None).unwrap();
        let (k, se) = s.log_moment(0.125).unwrap();
        let exact = -0.5 * (1.0f64 - 0.25).ln();
        assert!((exact - 0.14384).abs() < 1e-5);
        assert!((k - exact).abs() < 3.0 * se, "{k} vs {exact} ± {se}");
        assert!(matches!(s.log_moment(0.25), Err(Error::UnstableEpsilon { .. })));
    }

    #[test]
    fn eic_limits_and_t_family() {
        let q = mfg(1.0);
        let small = eic_monte_carlo(&q, 2.0, 1e-4, 10_000, 1, None).unwrap().value;
        let large = eic_monte_carlo(&q, 2.0, 0.2, 10_000, 1, None).unwrap().value;
        assert!(small > large);
        let t = VariationalDistribution::mean_field_t(vec![0.0], vec![1.0], 40.0).unwrap();
        let c = eic_monte_carlo(&t, 2.0, 0.1, 1000, 1, None).unwrap();
        assert!(c.value.is_infinite() && c.note.is_some());
        let (best, trace) = eic_scan(&q, 2.0, 10_000, 1, None).unwrap();
        assert_eq!(trace.len(), EPSILON_GRID_POINTS);
        assert!(trace.iter().all(|(_, v)| best.value <= *v));
    }

    #[test]
    fn divergence_bound_arithmetic() {
        let b = divergence_bound(est(ObjectiveKind::cubo2(), 1.0, 0.0), est(ObjectiveKind::Elbo, 0.2, 0.0)).unwrap();
        assert!((b.delta_bar - 1.6).abs() < 1e-14);
        let b3 = divergence_bound(est(ObjectiveKind::Cubo { alpha: 3.0 }, 1.0, 0.0), est(ObjectiveKind::Elbo, 0.2, 0.0))
            .unwrap();
        assert!((b3.delta_bar - 1.2).abs() < 1e-14);
        let bad = divergence_bound(est(ObjectiveKind::cubo2(), 0.0, 0.01), est(ObjectiveKind::Elbo, 1.0, 0.01));
        assert!(matches!(bad, Err(Error::EstimatorInconsistency { .. })));
        // Slightly negative within noise is accepted and clamped for bounds.
        let ok = divergence_bound(est(ObjectiveKind::cubo2(), 0.99, 0.01), est(ObjectiveKind::Elbo, 1.0, 0.01)).unwrap();
        assert!(ok.delta_bar < 0.0 && ok.for_bounds(0.0) == 0.0 && ok.for_bounds(3.0) > 0.0);
        assert!(divergence_bound(est(ObjectiveKind::Elbo, 1.0, 0.0), est(ObjectiveKind::Elbo, 0.0, 0.0)).is_err());
    }

    #[test]
    fn pi_bound_formula() {
        assert_eq!(wasserstein_bound_pi(3.0, 0.0, 2.0).unwrap().value, 0.0);
        let b = wasserstein_bound_pi(3.0, 1.6, 2.0).unwrap();
        assert_eq!(b.value, 3.0 * (1.6f64.exp_m1()).powf(0.25));
        assert!(wasserstein_bound_pi(f64::INFINITY, 0.5, 2.0).unwrap().value.is_infinite());
        assert!(wasserstein_bound_pi(1.0, 0.5, 2.0).unwrap().value < wasserstein_bound_pi(1.0, 0.6, 2.0).unwrap().value);
    }

    #[test]
    fn zero_divergence_gives_zero() {
        assert_eq!(wasserstein_bound_ei(2.0, 0.0, 1.0).unwrap().value, 0.0);
        assert_eq!(wasserstein_bound_poly_q(2.0, 1.0, 1.0, 0.0, 0.0, 2.0).unwrap().value, 0.0);
        assert_eq!(wasserstein_bound_sqrt_ei(2.0, 1.0, 0.0, 0.0, 2.0, 0.1).unwrap().value, 0.0);
        assert_eq!(wasserstein_bound_ei2p(&[(0.1, 0.5)], 0.0, 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn poly_q_formula_audit() {
        let (alpha, m2p, m2pq, d, kl, p) = (1.5, 2.0, 30.0, 0.4, 0.3, 2.0);
        let b = wasserstein_bound_poly_q(alpha, m2p, m2pq, d, kl, p).unwrap();
        let q = 3.0;
        let c = (m2p.sqrt() + (m2pq / (2f64.powf(4.0) * q) + 4.0 * (0.5 * d).exp() / alpha).sqrt()).powf(0.5);
        assert_eq!(b.inputs.constant, c);
        assert_eq!(b.value, 2.0 * c * kl.powf(0.25));
    }

    #[test]
    fn gaussian_soundness_1d() {
        // π = N(m, s²), ν = q = N(0, 1); W₂ = √(m² + (s − 1)²).
        let q = mfg(1.0);
        let pic4 = pic_analytic(&q, 4).unwrap().value;
        let m4 = q.central_fourth_moment();
        let m8 = central_moment_monte_carlo(&q, 8.0, 400_000, 2, None).unwrap().0;
        for (m, s) in [(0.3f64, 1.1f64), (0.0, 0.8), (1.0, 1.0), (-0.5, 0.9)] {
            let w2 = (m * m + (s - 1.0) * (s - 1.0)).sqrt();
            let s1 = DMatrix::from_element(1, 1, s * s);
            let s2 = DMatrix::from_element(1, 1, 1.0);
            let d2 = renyi_gaussians(2.0, &[m], &s1, &[0.0], &s2).unwrap();
            let kl = kl_gaussians(&[m], &s1, &[0.0], &s2).unwrap();
            assert!(wasserstein_bound_pi(pic4, d2, 2.0).unwrap().value >= w2);
            assert!(wasserstein_bound_poly_q(2.0, m4, m8, d2, kl, 2.0).unwrap().value >= w2);
            let sq = wasserstein_bound_sqrt_ei_scan(&q, 2.0, d2, kl, 2.0, 50_000, 4).unwrap();
            assert!(sq.value >= w2 && sq.value.is_finite());
            let (eic2, _) = eic_scan(&q, 2.0, 50_000, 4, None).unwrap();
            assert!(wasserstein_bound_ei(eic2.value, kl, 2.0).unwrap().value >= w2);
            let scan = ei2p_scan(&q, 1.0, 50_000, 4).unwrap();
            assert!(wasserstein_bound_ei2p(&scan, kl, 1.0).unwrap().value >= (m.abs()));
        }
        // Order-4 exponential moments of Gaussians are infinite.
        assert!(ei2p_scan(&q, 2.0, 1000, 1).unwrap().is_empty());
        assert!(wasserstein_bound_ei2p(&[], 0.1, 2.0).unwrap().value.is_infinite());
    }

    #[test]
    fn summary_bounds() {
        let z = summary_error_bounds(Some(0.0), Some(0.0), 1.0).unwrap();
        assert_eq!((z.mean_bound, z.mad_bound, z.std_bound, z.cov_bound), (0.0, 0.0, 0.0, 0.0));
        let b = summary_error_bounds(None, Some(15.0), 9.7).unwrap();
        assert!((b.cov_bound - 741.0).abs() < 1e-9);
        assert_eq!(b.mean_bound, 15.0);
        let c = summary_error_bounds(Some(2.0), None, 1.0).unwrap();
        assert_eq!(c.mad_bound, 4.0);
        assert!(c.std_bound.is_infinite());
        assert!(summary_error_bounds(None, None, 1.0).is_err());
    }

    #[test]
    fn predictive() {
        assert_eq!(predictive_bound(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(predictive_bound(1.0, 3.0).unwrap(), 3.0);
        assert!(predictive_bound(-1.0, 3.0).is_err());
    }

    #[test]
    fn spectral_scale_full_rank() {
        let q = VariationalDistribution::full_rank_gaussian(vec![0.0, 0.0], vec![vec![2.0, 0.0], vec![1.0, 1.0]]).unwrap();
        // cov [[4,2],[2,2]] has largest eigenvalue 3 + √5.
        assert!((spectral_scale(&q).unwrap() - (3.0 + 5f64.sqrt()).sqrt()).abs() < 1e-12);
    }
}
