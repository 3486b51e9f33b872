//! The `vibound` command line.
//!
//! Exit codes: 0 success (or UseDirect), 1 runtime error, 2 bad usage or
//! input, 3 optimizer divergence, 10 UsePSIS, 20 Refine, 30 failed stage or
//! failed case-study cell.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use vibound_core::case_study::{CaseStudyConfig, Study};
use vibound_core::distributions::{FamilyKind, FamilySpec, Scalar1D};
use vibound_core::divergences::{self, DivergenceKind};
use vibound_core::inference::{self, FitResult, ObjectiveEstimate, ObjectiveKind, OptimizerConfig};
use vibound_core::oracles;
use vibound_core::workflow::{self, DiagnosticConfig, WorkflowConfig};
use vibound_core::Error;

use crate::io::{self, schema, Envelope};
use crate::{parallel, registry, tables};

pub mod exit {
    pub const OK: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const STAGE_FAILED: i32 = 30;
}

#[derive(Debug, Parser)]
#[command(name = "vibound", version, about = "Validated variational inference: fits, bounds and diagnostics")]
pub struct Cli {
    /// Worker threads (0 = one per core). Overrides VIBOUND_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Omit the generation time from JSON output.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one variational approximation by KLVI or CHIVI.
    Fit(FitArgs),
    /// Run the full validated workflow and encode the decision in the exit code.
    Workflow(WorkflowArgs),
    /// Reproduce a case-study table with ground truth.
    CaseStudy(CaseStudyArgs),
    /// Evaluate a reference oracle.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    Klvi,
    Chivi,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, value_enum)]
    pub objective: Objective,
    /// mean-field-t, mean-field-gaussian, full-rank-t or full-rank-gaussian.
    #[arg(long, default_value = "mean-field-t")]
    pub family: String,
    /// Degrees of freedom for t families (default 40).
    #[arg(long)]
    pub df: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// FitResult JSON; the trace goes to `<stem>.trace.csv` beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Optimizer settings (JSON); missing fields take the objective's defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replacement data set for the model (JSON).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct WorkflowArgs {
    #[arg(long)]
    pub model: String,
    /// WorkflowConfig JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report JSON; the text table goes to `<stem>.txt` beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyArg {
    EightSchools,
    RobustRegression,
}

impl From<StudyArg> for Study {
    fn from(s: StudyArg) -> Self {
        match s {
            StudyArg::EightSchools => Study::EightSchools,
            StudyArg::RobustRegression => Study::RobustRegression,
        }
    }
}

#[derive(Debug, Args)]
pub struct CaseStudyArgs {
    #[arg(value_enum)]
    pub study: StudyArg,
    /// Output directory for the bundle.
    #[arg(long)]
    pub out: PathBuf,
    /// CaseStudyConfig JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// W_p between two 1-D distributions by the quantile coupling,
    /// e.g. `w1d normal 0 1 normal 1 1 --p 2`.
    #[command(allow_negative_numbers = true)]
    W1d {
        #[arg(required = true, num_args = 2..)]
        spec: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
    },
    /// Closed-form W_2 between Gaussians; vectors and row-major matrices as
    /// comma-separated lists.
    #[command(allow_negative_numbers = true)]
    Wgauss {
        #[arg(long)]
        mean1: String,
        #[arg(long)]
        cov1: String,
        #[arg(long)]
        mean2: String,
        #[arg(long)]
        cov2: String,
    },
    /// KL or Rényi divergence between two 1-D distributions by quadrature,
    /// e.g. `divergence kl weibull 0.05 weibull 0.1` or
    /// `divergence renyi 2 weibull 1 weibull 0.5`.
    #[command(allow_negative_numbers = true)]
    Divergence {
        #[arg(required = true, num_args = 3..)]
        spec: Vec<String>,
    },
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: exit::USAGE, message: message.into() }
    }

    fn runtime(message: impl std::fmt::Display) -> Self {
        Failure { code: exit::RUNTIME, message: message.to_string() }
    }
}

impl From<io::IoError> for Failure {
    fn from(e: io::IoError) -> Self {
        Failure::runtime(e)
    }
}

impl From<registry::ModelError> for Failure {
    fn from(e: registry::ModelError) -> Self {
        Failure::usage(e.to_string())
    }
}

/// Core errors: divergence has its own code, bad inputs are usage errors.
fn core_failure(e: Error) -> Failure {
    let code = match e {
        Error::Diverged { .. } => exit::DIVERGED,
        Error::InvalidParameter(_) | Error::DimensionMismatch { .. } | Error::Unsupported(_) => exit::USAGE,
        _ => exit::RUNTIME,
    };
    Failure { code, message: e.to_string() }
}

/// Parse, run and return the process exit code. Messages go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("vibound: {}", f.message);
            f.code
        }
    }
}

pub fn run(cli: Cli) -> Result<i32, Failure> {
    let threads = parallel::resolve_threads(cli.threads).map_err(Failure::usage)?;
    let stamp = !cli.no_timestamp;
    parallel::pool(threads).install(|| match cli.command {
        Command::Fit(a) => cmd_fit(&a, stamp),
        Command::Workflow(a) => cmd_workflow(&a, stamp),
        Command::CaseStudy(a) => cmd_case_study(&a, stamp),
        Command::Oracle(o) => cmd_oracle(&o),
    })
}

pub fn parse_family(name: &str, df: Option<f64>) -> Result<FamilySpec, Failure> {
    let kind = FamilyKind::parse(name).ok_or_else(|| {
        Failure::usage(format!(
            "unknown family `{name}`; expected mean-field-t, mean-field-gaussian, full-rank-t or full-rank-gaussian"
        ))
    })?;
    match (kind.is_t(), df) {
        (true, Some(h)) if !(h > 0.0 && h.is_finite()) => Err(Failure::usage(format!("--df must be positive, got {h}"))),
        (true, h) => Ok(FamilySpec { kind, df: Some(h.unwrap_or(40.0)) }),
        (false, Some(_)) => Err(Failure::usage("--df applies to t families only")),
        (false, None) => Ok(FamilySpec { kind, df: None }),
    }
}

/// KLVI warm start used by a CHIVI fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarmStart {
    pub klvi_fit: FitResult,
    pub elbo: ObjectiveEstimate,
    pub widening: Option<f64>,
    pub cubo_floor_margin: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<WarmStart>,
    pub fit: FitResult,
}

fn cmd_fit(a: &FitArgs, stamp: bool) -> Result<i32, Failure> {
    let target = registry::build(&a.model, a.data.as_deref())?;
    let family = parse_family(&a.family, a.df)?;
    let mut cfg = match (&a.config, a.objective) {
        (Some(p), _) => io::read_json::<OptimizerConfig>(p).map_err(|e| Failure::usage(e.to_string()))?,
        (None, Objective::Klvi) => OptimizerConfig::default(),
        (None, Objective::Chivi) => workflow::chivi_defaults(),
    };
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    cfg.seed = a.seed;
    cfg.validate().map_err(core_failure)?;

    let target = target.as_ref();
    let (warm_start, fit) = match a.objective {
        Objective::Klvi => (None, inference::fit(target, family, ObjectiveKind::Elbo, &cfg, None).map_err(core_failure)?),
        Objective::Chivi => {
            let klvi_cfg = OptimizerConfig { seed: a.seed.wrapping_add(1), ..OptimizerConfig::default() };
            let eta = inference::fit(target, family, ObjectiveKind::Elbo, &klvi_cfg, None).map_err(core_failure)?;
            let diag = DiagnosticConfig { seed: a.seed.wrapping_add(2), ..DiagnosticConfig::default() };
            let elbo = workflow::eta_elbo(target, &eta.q, &diag).map_err(core_failure)?;
            let (widening, margin) = (Some(workflow::DEFAULT_CHIVI_WIDENING), Some(workflow::DEFAULT_CUBO_FLOOR_MARGIN));
            let fit = workflow::fit_chivi(target, family, &cfg, &eta.q, &elbo, widening, margin).map_err(core_failure)?;
            (Some(WarmStart { klvi_fit: eta, elbo, widening, cubo_floor_margin: margin }), fit)
        }
    };

    let trace = io::sibling(&a.out, "trace.csv");
    io::write_csv(
        &trace,
        &["iteration", "smoothed_objective"],
        fit.objective_trace.iter().map(|(i, v)| [i.to_string(), io::fmt_f64(*v)]),
    )?;
    let report = FitReport { model: a.model.clone(), seed: a.seed, warm_start, fit };
    io::write_json(&a.out, &Envelope::new(schema::FIT_RESULT, &report, stamp))?;
    eprintln!("wrote {} and {}", a.out.display(), trace.display());
    Ok(exit::OK)
}

fn cmd_workflow(a: &WorkflowArgs, stamp: bool) -> Result<i32, Failure> {
    let target = registry::build(&a.model, a.data.as_deref())?;
    let mut cfg = match &a.config {
        Some(p) => io::read_json::<WorkflowConfig>(p).map_err(|e| Failure::usage(e.to_string()))?,
        None => WorkflowConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let report = workflow::run_workflow(target.as_ref(), &cfg).map_err(core_failure)?;
    io::write_json(&a.out, &Envelope::new(schema::WORKFLOW_REPORT, &report, stamp))?;
    let text = tables::workflow_text(&report);
    io::write_text(&io::sibling(&a.out, "txt"), &text)?;
    print!("{text}");
    Ok(report.decision.exit_code())
}

/// Files written by `case-study` inside the output directory.
pub mod bundle {
    pub const REPORT: &str = "report.json";
    pub const TABLE_CSV: &str = "table.csv";
    pub const TABLE_TEXT: &str = "table.txt";
    pub const MARGINALS: &str = "marginals.csv";
}

fn cmd_case_study(a: &CaseStudyArgs, stamp: bool) -> Result<i32, Failure> {
    let mut cfg = match &a.config {
        Some(p) => io::read_json::<CaseStudyConfig>(p).map_err(|e| Failure::usage(e.to_string()))?,
        None => CaseStudyConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let report = parallel::run_case_study(a.study.into(), &cfg)
        .map_err(|e| Failure { code: exit::STAGE_FAILED, message: format!("ground truth failed: {e}") })?;
    let dir: &Path = &a.out;
    io::write_json(&dir.join(bundle::REPORT), &Envelope::new(schema::CASE_STUDY_REPORT, &report, stamp))?;
    let header = tables::case_study_csv_header(&report);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_csv(&dir.join(bundle::TABLE_CSV), &header, tables::case_study_csv_rows(&report))?;
    io::write_csv(&dir.join(bundle::MARGINALS), &["column", "coordinate", "x", "density"], tables::marginal_density_rows(&report))?;
    let text = tables::case_study_text(&report);
    io::write_text(&dir.join(bundle::TABLE_TEXT), &text)?;
    print!("{text}");
    Ok(if report.all_succeeded() { exit::OK } else { exit::STAGE_FAILED })
}

fn number(tok: &str) -> Result<f64, Failure> {
    tok.parse::<f64>().map_err(|_| Failure::usage(format!("expected a number, got `{tok}`")))
}

fn numbers(list: &str) -> Result<Vec<f64>, Failure> {
    list.split(',').map(|t| number(t.trim())).collect()
}

/// One distribution from a family name and its numeric parameters.
pub fn scalar_from(family: &str, p: &[f64]) -> Result<Scalar1D, Failure> {
    let d = match (family, p) {
        ("normal" | "gaussian", [loc, scale]) => Scalar1D::normal(*loc, *scale),
        ("t" | "student-t", [df]) => Scalar1D::student_t(0.0, 1.0, *df),
        ("t" | "student-t", [loc, scale, df]) => Scalar1D::student_t(*loc, *scale, *df),
        ("weibull", [shape]) => Scalar1D::weibull(*shape, 1.0),
        ("weibull", [shape, scale]) => Scalar1D::weibull(*shape, *scale),
        ("half-cauchy", [scale]) => Scalar1D::half_cauchy(0.0, *scale),
        ("half-cauchy", [loc, scale]) => Scalar1D::half_cauchy(*loc, *scale),
        ("gpd" | "generalized-pareto", [loc, scale, shape]) => Scalar1D::generalized_pareto(*loc, *scale, *shape),
        ("normal" | "gaussian" | "t" | "student-t" | "weibull" | "half-cauchy" | "gpd" | "generalized-pareto", _) => {
            return Err(Failure::usage(format!("wrong number of parameters for `{family}`: {}", p.len())))
        }
        _ => {
            return Err(Failure::usage(format!(
                "unknown distribution `{family}`; expected normal, t, weibull, half-cauchy or gpd"
            )))
        }
    };
    d.map_err(|e| Failure::usage(e.to_string()))
}

/// Exactly two distributions, each a family name followed by its numbers.
pub fn parse_pair(tokens: &[String]) -> Result<(Scalar1D, Scalar1D), Failure> {
    let mut groups: Vec<(&str, Vec<f64>)> = Vec::new();
    for tok in tokens {
        match tok.parse::<f64>() {
            Ok(v) => match groups.last_mut() {
                Some(g) => g.1.push(v),
                None => return Err(Failure::usage(format!("expected a distribution name, got `{tok}`"))),
            },
            Err(_) => groups.push((tok.as_str(), Vec::new())),
        }
    }
    match groups.as_slice() {
        [(fa, pa), (fb, pb)] => Ok((scalar_from(fa, pa)?, scalar_from(fb, pb)?)),
        _ => Err(Failure::usage(format!("expected two distributions, got {}", groups.len()))),
    }
}

fn matrix(list: &str, d: usize) -> Result<DMatrix<f64>, Failure> {
    let v = numbers(list)?;
    if v.len() != d * d {
        return Err(Failure::usage(format!("covariance needs {} entries, got {}", d * d, v.len())));
    }
    Ok(DMatrix::from_row_slice(d, d, &v))
}

/// Fixed ten-decimal output; `inf`/`nan` for non-finite values.
pub fn fixed(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.10}")
    } else {
        io::fmt_f64(v)
    }
}

pub fn oracle_value(o: &OracleCommand) -> Result<f64, Failure> {
    let usage = |e: Error| Failure::usage(e.to_string());
    match o {
        OracleCommand::W1d { spec, p } => {
            let (a, b) = parse_pair(spec)?;
            oracles::wasserstein_1d(&a, &b, *p).map_err(usage)
        }
        OracleCommand::Wgauss { mean1, cov1, mean2, cov2 } => {
            let (m1, m2) = (numbers(mean1)?, numbers(mean2)?);
            let (s1, s2) = (matrix(cov1, m1.len())?, matrix(cov2, m2.len())?);
            oracles::wasserstein_gaussian(&m1, &s1, &m2, &s2).map_err(usage)
        }
        OracleCommand::Divergence { spec } => {
            let (kind, rest) = match spec[0].as_str() {
                "kl" => (DivergenceKind::Kl, &spec[1..]),
                "renyi" => {
                    let alpha = number(spec.get(1).map(String::as_str).unwrap_or(""))?;
                    (DivergenceKind::Renyi { alpha }, &spec[2..])
                }
                other => return Err(Failure::usage(format!("unknown divergence `{other}`; expected kl or renyi <alpha>"))),
            };
            let (a, b) = parse_pair(rest)?;
            divergences::divergence_1d_quadrature(kind, &a, &b).map_err(usage)
        }
    }
}

fn cmd_oracle(o: &OracleCommand) -> Result<i32, Failure> {
    println!("{}", fixed(oracle_value(o)?));
    Ok(exit::OK)
}
