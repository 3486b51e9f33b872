//! The two case studies: eight schools (three CHIVI columns over two
//! parameterizations and two t degrees of freedom) and the toy robust
//! regression (mean-field KLVI, mean-field CHIVI, full-rank KLVI). Each column
//! reports δ̄₂, k̂, w̄₂ and the mean/std/covariance errors against a ground
//! truth, with and without PSIS.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bounds::{DivergenceBound, WassersteinBound};
use crate::distributions::{FamilySpec, VariationalDistribution};
use crate::error::Result;
use crate::inference::{self, ObjectiveKind, OptimizerConfig};
use crate::models::{
    EightSchoolsCentered, EightSchoolsData, EightSchoolsNonCentered, RobustRegression, RobustRegressionData, Target,
};
use crate::oracles::{self, ErrorMetrics, GroundTruth, QuadratureConfig, SamplerConfig};
use crate::psis;
use crate::summary::{weighted_moments, Moments};
use crate::workflow::{self, DiagnosticConfig, PsisSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    EightSchools,
    RobustRegression,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::EightSchools => "eight-schools",
            Study::RobustRegression => "robust-regression",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eight-schools" => Some(Study::EightSchools),
            "robust-regression" => Some(Study::RobustRegression),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseModel {
    EightSchoolsCentered,
    EightSchoolsNonCentered,
    RobustRegression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub label: String,
    pub model: CaseModel,
    pub family: FamilySpec,
    pub objective: ObjectiveKind,
}

pub fn columns(study: Study) -> Vec<ColumnSpec> {
    let col = |label: &str, model, family, objective| ColumnSpec { label: label.to_string(), model, family, objective };
    match study {
        Study::EightSchools => alloc::vec![
            col("centered, df 40", CaseModel::EightSchoolsCentered, FamilySpec::mean_field_t(40.0), ObjectiveKind::cubo2()),
            col("non-centered, df 40", CaseModel::EightSchoolsNonCentered, FamilySpec::mean_field_t(40.0), ObjectiveKind::cubo2()),
            col("non-centered, df 8", CaseModel::EightSchoolsNonCentered, FamilySpec::mean_field_t(8.0), ObjectiveKind::cubo2()),
        ],
        Study::RobustRegression => alloc::vec![
            col("mean-field KLVI", CaseModel::RobustRegression, FamilySpec::mean_field_t(40.0), ObjectiveKind::Elbo),
            col("mean-field CHIVI", CaseModel::RobustRegression, FamilySpec::mean_field_t(40.0), ObjectiveKind::cubo2()),
            col("full-rank KLVI", CaseModel::RobustRegression, FamilySpec::full_rank_t(40.0), ObjectiveKind::Elbo),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseStudyConfig {
    pub klvi: OptimizerConfig,
    pub chivi: OptimizerConfig,
    pub diagnostics: DiagnosticConfig,
    pub sampler: SamplerConfig,
    pub quadrature: QuadratureConfig,
    pub eight_schools: EightSchoolsData,
    pub robust_regression: RobustRegressionData,
    pub chivi_init_widening: Option<f64>,
    pub cubo_floor_margin: Option<f64>,
    pub seed: u64,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        CaseStudyConfig {
            klvi: OptimizerConfig::default(),
            chivi: workflow::chivi_defaults(),
            diagnostics: DiagnosticConfig::default(),
            sampler: SamplerConfig::default(),
            quadrature: QuadratureConfig::default(),
            eight_schools: EightSchoolsData::canonical(),
            robust_regression: RobustRegressionData::default_case(),
            chivi_init_widening: Some(workflow::DEFAULT_CHIVI_WIDENING),
            cubo_floor_margin: Some(workflow::DEFAULT_CUBO_FLOOR_MARGIN),
            seed: 0,
        }
    }
}

impl CaseStudyConfig {
    pub fn target(&self, model: CaseModel) -> Result<Box<dyn Target>> {
        Ok(match model {
            CaseModel::EightSchoolsCentered => Box::new(EightSchoolsCentered::new(self.eight_schools.clone())?),
            CaseModel::EightSchoolsNonCentered => Box::new(EightSchoolsNonCentered::new(self.eight_schools.clone())?),
            CaseModel::RobustRegression => Box::new(RobustRegression::with_defaults(self.robust_regression.clone())?),
        })
    }

    /// Per-column optimizer and diagnostic seeds.
    fn column_configs(&self, index: usize) -> (OptimizerConfig, OptimizerConfig, DiagnosticConfig) {
        let base = self.seed.wrapping_mul(31).wrapping_add(10 * index as u64);
        let mut klvi = self.klvi.clone();
        let mut chivi = self.chivi.clone();
        let mut diag = self.diagnostics.clone();
        klvi.seed = base + 1;
        chivi.seed = base + 2;
        diag.seed = base + 3;
        (klvi, chivi, diag)
    }
}

/// Ground truth for one model, in that model's own coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTruth {
    pub model: CaseModel,
    pub coordinate_names: Vec<String>,
    pub truth: GroundTruth,
}

/// Quadrature for robust regression. For eight schools one reference run on
/// the non-centered model serves both parameterizations: its draws as they
/// are, and mapped to (μ, log τ, θ) for the centered one.
pub fn ground_truths(study: Study, config: &CaseStudyConfig) -> Result<Vec<ModelTruth>> {
    match study {
        Study::RobustRegression => {
            let t = config.target(CaseModel::RobustRegression)?;
            let truth = oracles::quadrature_posterior_moments(t.as_ref(), &config.quadrature)?;
            Ok(alloc::vec![ModelTruth { model: CaseModel::RobustRegression, coordinate_names: t.coordinate_names(), truth }])
        }
        Study::EightSchools => {
            let nc = config.target(CaseModel::EightSchoolsNonCentered)?;
            let centered = config.target(CaseModel::EightSchoolsCentered)?;
            let chains = (0..config.sampler.chains.max(1))
                .map(|c| oracles::run_chain(nc.as_ref(), &config.sampler, c))
                .collect::<Result<Vec<_>>>()?;
            eight_schools_truths(nc.as_ref(), centered.as_ref(), &chains)
        }
    }
}

/// Both eight-schools truths from non-centered reference chains.
pub fn eight_schools_truths(nc: &dyn Target, centered: &dyn Target, chains: &[oracles::ChainOutput]) -> Result<Vec<ModelTruth>> {
    let mapped: Vec<_> = chains.iter().map(|c| c.to_reporting(nc)).collect();
    Ok(alloc::vec![
        ModelTruth {
            model: CaseModel::EightSchoolsCentered,
            coordinate_names: centered.coordinate_names(),
            truth: oracles::ground_truth_from_chains(&mapped, nc.dim())?,
        },
        ModelTruth {
            model: CaseModel::EightSchoolsNonCentered,
            coordinate_names: nc.coordinate_names(),
            truth: oracles::ground_truth_from_chains(chains, nc.dim())?,
        },
    ])
}

fn truth_for(truths: &[ModelTruth], model: CaseModel) -> Result<&Moments> {
    truths
        .iter()
        .find(|t| t.model == model)
        .map(|t| &t.truth.moments)
        .ok_or_else(|| crate::error::invalid("no ground truth for this model"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnResult {
    /// The approximation the column diagnoses.
    pub approximation: VariationalDistribution,
    pub delta_bar_2: DivergenceBound,
    pub psis: PsisSummary,
    pub w_bar_2: WassersteinBound,
    pub errors: ErrorMetrics,
    pub approximation_moments: Moments,
    pub psis_moments: Moments,
    pub fit_iterations: usize,
    pub fit_converged: bool,
    pub fit_stopped_at_floor: bool,
}

impl ColumnResult {
    pub fn k_hat(&self) -> f64 {
        self.psis.k_hat
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnOutcome {
    pub spec: ColumnSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ColumnResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Fit and diagnose one column. η is the KLVI fit of the same family; for a
/// CHIVI column it is also the CHIVI starting point.
pub fn evaluate_column(spec: &ColumnSpec, index: usize, config: &CaseStudyConfig, truths: &[ModelTruth]) -> Result<ColumnResult> {
    let truth = truth_for(truths, spec.model)?;
    let target = config.target(spec.model)?;
    let target = target.as_ref();
    let (klvi_cfg, chivi_cfg, diag) = config.column_configs(index);
    let eta = inference::fit(target, spec.family, ObjectiveKind::Elbo, &klvi_cfg, None)?;
    let elbo = workflow::eta_elbo(target, &eta.q, &diag)?;
    let fit = match spec.objective {
        ObjectiveKind::Elbo => eta,
        ObjectiveKind::Cubo { .. } => workflow::fit_chivi(
            target,
            spec.family,
            &chivi_cfg,
            &eta.q,
            &elbo,
            config.chivi_init_widening,
            config.cubo_floor_margin,
        )?,
    };
    let is = workflow::importance_sample(target, &fit.q, diag.t_diag, diag.seed)?;
    let bounds = workflow::bound_report(&fit.q, &is.log_weights, elbo, &diag)?;

    // Monte Carlo moments, so t families and PSIS are treated alike.
    let approx = weighted_moments(&is.batch.draws, is.batch.d, None)?;
    let corrected = weighted_moments(&is.batch.draws, is.batch.d, Some(&is.psis.weights()))?;
    let errors = oracles::error_metrics(truth, &approx, Some(&corrected))?;
    Ok(ColumnResult {
        approximation: fit.q.clone(),
        delta_bar_2: bounds.delta_bar_2,
        psis: PsisSummary { k_hat: is.psis.k_hat, tail_count: is.psis.tail_count, degenerate: is.psis.degenerate, draws: diag.t_diag },
        w_bar_2: bounds.w_bar_2,
        errors,
        approximation_moments: approx,
        psis_moments: corrected,
        fit_iterations: fit.iterations,
        fit_converged: fit.converged,
        fit_stopped_at_floor: fit.stopped_at_floor,
    })
}

pub fn outcome(spec: &ColumnSpec, index: usize, config: &CaseStudyConfig, truths: &[ModelTruth]) -> ColumnOutcome {
    match evaluate_column(spec, index, config, truths) {
        Ok(r) => ColumnOutcome { spec: spec.clone(), result: Some(r), error: None },
        Err(e) => ColumnOutcome { spec: spec.clone(), result: None, error: Some(alloc::format!("{e}")) },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub study: Study,
    pub ground_truths: Vec<ModelTruth>,
    pub columns: Vec<ColumnOutcome>,
}

impl CaseStudyReport {
    /// `√‖Σ_π‖₂` in the coordinates of the first column.
    pub fn truth_scale(&self) -> f64 {
        let model = self.columns[0].spec.model;
        self.ground_truths.iter().find(|t| t.model == model).map_or(f64::NAN, |t| t.truth.spectral_scale)
    }

    pub fn all_succeeded(&self) -> bool {
        self.columns.iter().all(|c| c.result.is_some())
    }

    pub fn column(&self, label: &str) -> Option<&ColumnResult> {
        self.columns.iter().find(|c| c.spec.label == label).and_then(|c| c.result.as_ref())
    }

    /// Row labels and per-column values (`None` for a failed column).
    pub fn table(&self) -> Vec<(&'static str, Vec<Option<f64>>)> {
        let rows: [(&'static str, fn(&ColumnResult) -> f64); 9] = [
            ("D2 bound", |r| r.delta_bar_2.delta_bar),
            ("k-hat", |r| r.psis.k_hat),
            ("W2 bound", |r| r.w_bar_2.value),
            ("mean error", |r| r.errors.mean_error),
            ("PSIS mean error", |r| r.errors.psis_mean_error.unwrap_or(f64::NAN)),
            ("std error", |r| r.errors.std_error),
            ("PSIS std error", |r| r.errors.psis_std_error.unwrap_or(f64::NAN)),
            ("cov error", |r| r.errors.cov_error),
            ("PSIS cov error", |r| r.errors.psis_cov_error.unwrap_or(f64::NAN)),
        ];
        rows.iter()
            .map(|(name, f)| (*name, self.columns.iter().map(|c| c.result.as_ref().map(f)).collect()))
            .collect()
    }
}

/// Sequential driver; the command-line tool runs the same pieces in parallel.
pub fn run_case_study(study: Study, config: &CaseStudyConfig) -> Result<CaseStudyReport> {
    let truths = ground_truths(study, config)?;
    let columns = columns(study).iter().enumerate().map(|(i, s)| outcome(s, i, config, &truths)).collect();
    Ok(CaseStudyReport { study, ground_truths: truths, columns })
}

/// Reject a k̂ that is the degenerate-weights sentinel when a finite value is
/// needed for display.
pub fn display_k_hat(k: f64) -> f64 {
    if k <= psis::DEGENERATE_K_HAT {
        f64::NEG_INFINITY
    } else {
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_layout() {
        let es = columns(Study::EightSchools);
        assert_eq!(es.len(), 3);
        assert_eq!(es[0].model, CaseModel::EightSchoolsCentered);
        assert!(es.iter().all(|c| c.objective == ObjectiveKind::cubo2()));
        let rr = columns(Study::RobustRegression);
        assert_eq!(rr.len(), 3);
        assert!(rr[2].family.kind.is_full_rank());
        assert_eq!(Study::parse("robust-regression"), Some(Study::RobustRegression));
        assert_eq!(Study::parse("nope"), None);
    }

    #[test]
    fn column_seeds_differ() {
        let c = CaseStudyConfig::default();
        let (a, _, _) = c.column_configs(0);
        let (b, _, _) = c.column_configs(1);
        assert_ne!(a.seed, b.seed);
    }
}
