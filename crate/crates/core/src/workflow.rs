//! The validated variational workflow: fit by CHIVI, screen with k̂, fit by
//! KLVI, bound the 2-divergence and the 2-Wasserstein distance, then decide
//! between using the approximation directly, correcting it with PSIS, or
//! refining the family.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bounds::{self, DivergenceBound, SummaryErrorBounds, WassersteinBound};
use crate::distributions::{FamilySpec, SampleBatch, VariationalDistribution};
use crate::error::{invalid, Error, Result};
use crate::inference::{self, FitResult, ObjectiveEstimate, ObjectiveKind, OptimizerConfig};
use crate::models::Target;
use crate::psis::{self, PsisResult};
use crate::rng::streams;
use crate::summary::Moments;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub k_hat_max: f64,
    pub delta_moderate: f64,
    pub delta_star: f64,
    /// Target accuracy for direct use; `None` means `0.1 √‖Σ_q‖₂`.
    pub w_small: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { k_hat_max: psis::K_UNRELIABLE, delta_moderate: 4.6, delta_star: 0.01, w_small: None }
    }
}

/// Fraction of `√‖Σ_q‖₂` used when `w_small` is not given.
pub const DEFAULT_W_SMALL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticConfig {
    /// Draws used for k̂, CUBO and ELBO.
    pub t_diag: usize,
    /// Draws used for Monte Carlo moment constants.
    pub t_moments: usize,
    /// Also compute the exponential and higher-moment Wasserstein bounds and
    /// report the minimum over all methods.
    pub extended_bounds: bool,
    /// Standard errors added to δ̄₂ for the conservative bounds.
    pub z: f64,
    pub seed: u64,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        DiagnosticConfig { t_diag: 100_000, t_moments: 100_000, extended_bounds: false, z: bounds::DEFAULT_Z, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkflowConfig {
    pub family: FamilySpec,
    pub chivi: OptimizerConfig,
    pub klvi: OptimizerConfig,
    /// Start CHIVI from the KLVI fit with its scale multiplied by this factor;
    /// `None` starts from `chivi.init_scale` instead.
    pub chivi_init_widening: Option<f64>,
    /// Stop CHIVI once its smoothed CUBO falls this far below ELBO(η);
    /// `None` disables the guard.
    pub cubo_floor_margin: Option<f64>,
    pub diagnostics: DiagnosticConfig,
    pub thresholds: Thresholds,
    pub seed: u64,
    /// Which round of a user-driven refinement loop this run represents.
    pub refinement_round: usize,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        WorkflowConfig {
            family: FamilySpec::default(),
            chivi: chivi_defaults(),
            klvi: OptimizerConfig::default(),
            chivi_init_widening: Some(DEFAULT_CHIVI_WIDENING),
            cubo_floor_margin: Some(DEFAULT_CUBO_FLOOR_MARGIN),
            diagnostics: DiagnosticConfig::default(),
            thresholds: Thresholds::default(),
            seed: 0,
            refinement_round: 0,
        }
    }
}

/// CHIVI needs more draws per step than KLVI: with a few dozen, the
/// self-normalized CUBO gradient misses the tails and the scale can run off.
pub fn chivi_defaults() -> OptimizerConfig {
    OptimizerConfig {
        mc_samples_per_step: 300,
        step_size: 0.003,
        iterations: 20_000,
        relative_tolerance: 1e-5,
        ..OptimizerConfig::default()
    }
}

/// KLVI underdisperses; from there the CHIVI weights are heavy tailed and the
/// batch gradient pulls the scale further in. An overdispersed start avoids it.
pub const DEFAULT_CHIVI_WIDENING: f64 = 2.0;
/// Nats below ELBO(η) at which a smoothed CUBO is treated as pure MC bias.
pub const DEFAULT_CUBO_FLOOR_MARGIN: f64 = 1.0;

/// CHIVI fit started from the KLVI fit `eta` (optionally widened) with the
/// CUBO floor set from `elbo`.
pub fn fit_chivi(
    target: &dyn Target,
    family: FamilySpec,
    config: &OptimizerConfig,
    eta: &VariationalDistribution,
    elbo: &ObjectiveEstimate,
    widening: Option<f64>,
    floor_margin: Option<f64>,
) -> Result<FitResult> {
    let mut config = config.clone();
    config.cubo_floor = floor_margin.map(|m| elbo.value - m);
    let init = match widening {
        Some(c) => Some(eta.widened(c)?),
        None => None,
    };
    inference::fit(target, family, ObjectiveKind::cubo2(), &config, init.as_ref())
}

impl WorkflowConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if !(t.k_hat_max > 0.0 && t.delta_moderate > 0.0 && t.delta_star > 0.0) {
            return Err(invalid("thresholds must be positive"));
        }
        if t.delta_star >= t.delta_moderate {
            return Err(invalid("delta_star must be below delta_moderate"));
        }
        if let Some(w) = t.w_small {
            if !(w > 0.0) {
                return Err(invalid("w_small must be positive"));
            }
        }
        if self.diagnostics.t_diag < psis::MIN_DRAWS || self.diagnostics.t_moments < 100 {
            return Err(invalid("t_diag must be at least 25 and t_moments at least 100"));
        }
        if self.chivi_init_widening.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(invalid("chivi_init_widening must be positive"));
        }
        if self.cubo_floor_margin.is_some_and(|m| !(m >= 0.0)) {
            return Err(invalid("cubo_floor_margin must be non-negative"));
        }
        if !(self.diagnostics.z >= 0.0) {
            return Err(invalid("z must be non-negative"));
        }
        self.chivi.validate()?;
        self.klvi.validate()
    }

    /// Optimizer seeds derived from the workflow seed, so one `--seed` fixes
    /// the whole run.
    fn seeded(&self) -> (OptimizerConfig, OptimizerConfig, DiagnosticConfig) {
        let mut chivi = self.chivi.clone();
        let mut klvi = self.klvi.clone();
        let mut diag = self.diagnostics.clone();
        klvi.seed = self.seed.wrapping_mul(3).wrapping_add(1);
        chivi.seed = self.seed.wrapping_mul(3).wrapping_add(2);
        diag.seed = self.seed.wrapping_mul(3).wrapping_add(3);
        (chivi, klvi, diag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RefineFamilyOrReparameterize,
    UseDirect,
    UsePsis,
    Failed,
}

impl Decision {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(self) -> i32 {
        match self {
            Decision::UseDirect => 0,
            Decision::UsePsis => 10,
            Decision::RefineFamilyOrReparameterize => 20,
            Decision::Failed => 30,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Decision::RefineFamilyOrReparameterize => "refine family or reparameterize",
            Decision::UseDirect => "use approximation directly",
            Decision::UsePsis => "use PSIS-corrected estimates",
            Decision::Failed => "failed",
        }
    }
}

/// Step-8 threshold logic. Non-finite inputs force a refinement.
pub fn classify(delta_bar_2: f64, w_bar_2: f64, k_hat: f64, thresholds: &Thresholds, w_small: f64) -> Decision {
    if !(delta_bar_2.is_finite() && w_bar_2.is_finite() && k_hat.is_finite())
        || k_hat > thresholds.k_hat_max
        || delta_bar_2 >= thresholds.delta_moderate
    {
        Decision::RefineFamilyOrReparameterize
    } else if delta_bar_2 < thresholds.delta_star && w_bar_2 < w_small {
        Decision::UseDirect
    } else {
        Decision::UsePsis
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Stopped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub step: u8,
    pub name: String,
    pub status: StageStatus,
    pub detail: String,
}

/// k̂ screening output (the smoothed weights themselves are not kept).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsisSummary {
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub k_hat: f64,
    pub tail_count: usize,
    pub degenerate: bool,
    pub draws: usize,
}

impl PsisSummary {
    fn from_result(r: &PsisResult, draws: usize) -> Self {
        PsisSummary { k_hat: r.k_hat, tail_count: r.tail_count, degenerate: r.degenerate, draws }
    }
}

/// Draws from the approximation, their log-weights and the PSIS fit.
pub struct ImportanceSample {
    pub batch: SampleBatch,
    pub log_weights: Vec<f64>,
    pub psis: PsisResult,
}

/// Draw `t` points from `q` on the diagnostic stream and run PSIS on the
/// importance log-weights.
pub fn importance_sample(target: &dyn Target, q: &VariationalDistribution, t: usize, seed: u64) -> Result<ImportanceSample> {
    let batch = q.sample_stream(t, seed, streams::DIAGNOSTIC_Q);
    let log_weights = inference::log_weights(target, q, &batch)?;
    let psis = psis::psis_smooth(&log_weights)?;
    Ok(ImportanceSample { batch, log_weights, psis })
}

/// Bounds derived from δ̄₂ for one approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta_bar_2: DivergenceBound,
    /// Minimum over the enabled methods.
    pub w_bar_2: WassersteinBound,
    pub w_bar_1: WassersteinBound,
    pub candidates: Vec<WassersteinBound>,
    pub summary: SummaryErrorBounds,
    /// Same bounds with δ̄₂ inflated by `z` standard errors.
    pub z: f64,
    pub w_bar_2_conservative: WassersteinBound,
    pub summary_conservative: SummaryErrorBounds,
}

fn min_bound(candidates: &[WassersteinBound]) -> WassersteinBound {
    candidates
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .cloned()
        .expect("the PI bound is always present")
}

fn w2_candidates(q: &VariationalDistribution, delta: f64, diag: &DiagnosticConfig) -> Result<Vec<WassersteinBound>> {
    let pic4 = bounds::pic_analytic(q, 4)?.value;
    let mut out = vec![bounds::wasserstein_bound_pi(pic4, delta, 2.0)?];
    if diag.extended_bounds {
        // D₂ bounds KL, so δ̄₂ serves as both divergence inputs.
        let seed = diag.seed;
        let (m4, _) = bounds::central_moment(q, 4.0, diag.t_moments, seed)?;
        let (m8, _) = bounds::central_moment(q, 8.0, diag.t_moments, seed)?;
        out.push(bounds::wasserstein_bound_poly_q(2.0, m4, m8, delta, delta, 2.0)?);
        out.push(bounds::wasserstein_bound_sqrt_ei_scan(q, 2.0, delta, delta, 2.0, diag.t_moments, seed)?);
        let (eic2, _) = bounds::eic_scan(q, 2.0, diag.t_moments, seed, None)?;
        out.push(bounds::wasserstein_bound_ei(eic2.value, delta, 2.0)?);
        let scan = bounds::ei2p_scan(q, 2.0, diag.t_moments, seed)?;
        out.push(bounds::wasserstein_bound_ei2p(&scan, delta, 2.0)?);
    }
    Ok(out)
}

fn bounds_at(q: &VariationalDistribution, delta: f64, diag: &DiagnosticConfig) -> Result<(Vec<WassersteinBound>, WassersteinBound, SummaryErrorBounds)> {
    let candidates = w2_candidates(q, delta, diag)?;
    let w2 = min_bound(&candidates);
    let pic2 = bounds::pic_analytic(q, 2)?.value;
    let w1 = bounds::wasserstein_bound_pi(pic2, delta, 1.0)?;
    let s = bounds::spectral_scale(q)?;
    let summary = bounds::summary_error_bounds(Some(w1.value.min(w2.value)), Some(w2.value), s)?;
    Ok((candidates, w1, summary))
}

/// ELBO of `eta` on the diagnostic stream.
pub fn eta_elbo(target: &dyn Target, eta: &VariationalDistribution, diag: &DiagnosticConfig) -> Result<ObjectiveEstimate> {
    let batch = eta.sample_stream(diag.t_diag, diag.seed, streams::DIAGNOSTIC_ETA);
    Ok(inference::elbo_from_log_weights(&inference::log_weights(target, eta, &batch)?, diag.seed))
}

/// δ̄₂ from a CUBO on the approximation's own log-weights and an ELBO of
/// some η, then the Wasserstein and summary bounds it implies.
pub fn bound_report(
    q: &VariationalDistribution,
    q_log_weights: &[f64],
    elbo: ObjectiveEstimate,
    diag: &DiagnosticConfig,
) -> Result<BoundReport> {
    let cubo = inference::cubo_from_log_weights(q_log_weights, 2.0, diag.seed);
    let delta_bar_2 = bounds::divergence_bound(cubo, elbo)?;

    let (candidates, w_bar_1, summary) = bounds_at(q, delta_bar_2.for_bounds(0.0), diag)?;
    let w_bar_2 = min_bound(&candidates);
    let (cons, _, summary_conservative) = bounds_at(q, delta_bar_2.for_bounds(diag.z), diag)?;
    Ok(BoundReport {
        delta_bar_2,
        w_bar_2,
        w_bar_1,
        candidates,
        summary,
        z: diag.z,
        w_bar_2_conservative: min_bound(&cons),
        summary_conservative,
    })
}

/// Mean, covariance, standard deviation and MAD of a variational
/// distribution (MAD by Monte Carlo on the given draws for t families).
pub fn approximation_moments(q: &VariationalDistribution, batch: &SampleBatch) -> Result<Moments> {
    let (mean, cov) = q.moments()?;
    let std: Vec<f64> = (0..q.dim()).map(|i| libm::sqrt(cov[(i, i)])).collect();
    let mad = match q.df() {
        // E|X| for a standard normal is √(2/π).
        None => std.iter().map(|s| s * libm::sqrt(2.0 / crate::math::PI)).collect(),
        Some(_) => {
            // Centred at the exact mean rather than the sample mean.
            let mut mad = vec![0.0; q.dim()];
            for row in batch.rows() {
                for k in 0..q.dim() {
                    mad[k] += (row[k] - mean[k]).abs();
                }
            }
            mad.into_iter().map(|v| v / batch.t as f64).collect()
        }
    };
    Ok(Moments { mean, cov, std, mad })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowReport {
    pub target: String,
    pub config: WorkflowConfig,
    pub refinement_round: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub klvi_fit: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chivi_fit: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psis: Option<PsisSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundReport>,
    /// `w_small` used in the decision and whether it was the heuristic default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_small: Option<f64>,
    pub w_small_is_default: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approximation_moments: Option<Moments>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psis_moments: Option<Moments>,
    pub decision: Decision,
    pub hints: Vec<String>,
    pub stage_log: Vec<StageRecord>,
}

impl WorkflowReport {
    pub fn k_hat(&self) -> Option<f64> {
        self.psis.map(|p| p.k_hat)
    }

    pub fn delta_bar_2(&self) -> Option<f64> {
        self.bounds.as_ref().map(|b| b.delta_bar_2.delta_bar)
    }

    pub fn w_bar_2(&self) -> Option<f64> {
        self.bounds.as_ref().map(|b| b.w_bar_2.value)
    }

    fn log(&mut self, step: u8, name: &str, status: StageStatus, detail: String) {
        self.stage_log.push(StageRecord { step, name: name.to_string(), status, detail });
    }

    fn fail(mut self, step: u8, name: &str, err: Error) -> Self {
        self.log(step, name, StageStatus::Failed, alloc::format!("{err}"));
        self.decision = Decision::Failed;
        self
    }
}

fn refine_hints(family: &FamilySpec) -> Vec<String> {
    let mut hints = Vec::new();
    if !family.kind.is_full_rank() {
        hints.push("try a full-rank family to capture posterior correlations".to_string());
    }
    hints.push("try a non-centered or otherwise decorrelating reparameterization".to_string());
    if family.kind.is_t() {
        hints.push("try different degrees of freedom for the t family".to_string());
    }
    hints
}

/// Run the workflow end to end. Stage errors are recorded in the stage log
/// and yield a partial report with decision [`Decision::Failed`]; only an
/// invalid configuration is returned as an error.
pub fn run_workflow(target: &dyn Target, config: &WorkflowConfig) -> Result<WorkflowReport> {
    config.validate()?;
    let (chivi_cfg, klvi_cfg, diag) = config.seeded();
    let mut report = WorkflowReport {
        target: target.name().to_string(),
        config: config.clone(),
        refinement_round: config.refinement_round,
        klvi_fit: None,
        chivi_fit: None,
        psis: None,
        bounds: None,
        w_small: None,
        w_small_is_default: config.thresholds.w_small.is_none(),
        approximation_moments: None,
        psis_moments: None,
        decision: Decision::Failed,
        hints: Vec::new(),
        stage_log: Vec::new(),
    };

    let family = config.family;
    report.log(1, "choose family", StageStatus::Ok, alloc::format!("{}", family_label(&family)));

    // The KLVI fit and its ELBO come first: η is the CHIVI starting point,
    // its ELBO sets the CHIVI floor, and both feed the divergence bound.
    let klvi = match inference::fit(target, family, ObjectiveKind::Elbo, &klvi_cfg, None) {
        Ok(f) => f,
        Err(e) => return Ok(report.fail(2, "KLVI fit for the CHIVI start", e)),
    };
    let elbo = match eta_elbo(target, &klvi.q, &diag) {
        Ok(e) => e,
        Err(e) => {
            report.klvi_fit = Some(klvi);
            return Ok(report.fail(2, "ELBO of the KLVI fit", e));
        }
    };
    let chivi = match fit_chivi(target, family, &chivi_cfg, &klvi.q, &elbo, config.chivi_init_widening, config.cubo_floor_margin) {
        Ok(f) => f,
        Err(e) => {
            report.klvi_fit = Some(klvi);
            return Ok(report.fail(2, "CHIVI fit", e));
        }
    };
    let start = match config.chivi_init_widening {
        Some(c) => alloc::format!("started from the KLVI fit widened by {c}"),
        None => "started from the default initialization".to_string(),
    };
    let floor = if chivi.stopped_at_floor { ", stopped at the CUBO floor" } else { "" };
    report.log(
        2,
        "CHIVI fit",
        StageStatus::Ok,
        alloc::format!(
            "iterations {}, converged {}, smoothed CUBO {:.6}, {start}{floor}",
            chivi.iterations, chivi.converged, chivi.best_smoothed_objective
        ),
    );
    let q_hat = chivi.q.clone();
    report.chivi_fit = Some(chivi);

    let is = match importance_sample(target, &q_hat, diag.t_diag, diag.seed) {
        Ok(s) => s,
        Err(e) => {
            report.klvi_fit = Some(klvi);
            return Ok(report.fail(3, "k-hat screen", e));
        }
    };
    let summary = PsisSummary::from_result(&is.psis, diag.t_diag);
    report.psis = Some(summary);
    match approximation_moments(&q_hat, &is.batch) {
        Ok(m) => report.approximation_moments = Some(m),
        Err(e) => {
            report.klvi_fit = Some(klvi);
            return Ok(report.fail(3, "k-hat screen", e));
        }
    }
    if !(summary.k_hat <= config.thresholds.k_hat_max) {
        report.log(
            3,
            "k-hat screen",
            StageStatus::Stopped,
            alloc::format!("k-hat {:.3} exceeds {}", summary.k_hat, config.thresholds.k_hat_max),
        );
        report.klvi_fit = Some(klvi);
        report.decision = Decision::RefineFamilyOrReparameterize;
        report.hints = refine_hints(&family);
        return Ok(report);
    }
    report.log(3, "k-hat screen", StageStatus::Ok, alloc::format!("k-hat {:.3}", summary.k_hat));

    report.log(
        4,
        "KLVI fit",
        StageStatus::Ok,
        alloc::format!("iterations {}, converged {}, smoothed ELBO {:.6}", klvi.iterations, klvi.converged, klvi.best_smoothed_objective),
    );
    report.klvi_fit = Some(klvi);

    let b = match bound_report(&q_hat, &is.log_weights, elbo, &diag) {
        Ok(b) => b,
        Err(e) => return Ok(report.fail(5, "ELBO/CUBO estimates and bounds", e)),
    };
    report.log(
        5,
        "ELBO and CUBO estimates",
        StageStatus::Ok,
        alloc::format!(
            "CUBO {:.6} ± {:.2e}, ELBO {:.6} ± {:.2e}",
            b.delta_bar_2.cubo.value,
            b.delta_bar_2.cubo.mc_std_error,
            b.delta_bar_2.elbo.value,
            b.delta_bar_2.elbo.mc_std_error
        ),
    );
    report.log(
        6,
        "divergence bound",
        StageStatus::Ok,
        alloc::format!("delta-bar-2 {:.6} ± {:.2e}", b.delta_bar_2.delta_bar, b.delta_bar_2.combined_mc_error),
    );
    report.log(
        7,
        "Wasserstein bound",
        StageStatus::Ok,
        alloc::format!("w-bar-2 {:.6} ({})", b.w_bar_2.value, b.w_bar_2.method.name()),
    );

    let w_small = match config.thresholds.w_small {
        Some(w) => w,
        None => match bounds::spectral_scale(&q_hat) {
            Ok(s) => DEFAULT_W_SMALL_FRACTION * s,
            Err(e) => return Ok(report.fail(8, "classify", e)),
        },
    };
    report.w_small = Some(w_small);
    let decision = classify(b.delta_bar_2.delta_bar, b.w_bar_2.value, summary.k_hat, &config.thresholds, w_small);
    report.bounds = Some(b);
    if decision == Decision::UsePsis {
        match crate::psis::psis_expectation(&is.batch, &is.psis) {
            Ok(m) => report.psis_moments = Some(m),
            Err(e) => return Ok(report.fail(8, "PSIS correction", e)),
        }
    }
    if decision == Decision::RefineFamilyOrReparameterize {
        report.hints = refine_hints(&family);
    }
    report.log(8, "classify", StageStatus::Ok, alloc::format!("{} (w_small {:.4})", decision.label(), w_small));
    report.decision = decision;
    Ok(report)
}

pub fn family_label(f: &FamilySpec) -> String {
    match f.df {
        Some(h) if f.kind.is_t() => alloc::format!("{} (df {h})", f.kind.name()),
        _ => f.kind.name().to_string(),
    }
}
