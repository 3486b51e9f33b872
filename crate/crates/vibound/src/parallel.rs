//! Thread control and the parallel case-study driver.
//!
//! Every unit of parallel work carries its own seed, so results do not depend
//! on the thread count or on scheduling order.

use rayon::prelude::*;

use vibound_core::case_study::{self, CaseModel, CaseStudyConfig, CaseStudyReport, ModelTruth, Study};
use vibound_core::oracles;
use vibound_core::Result;

pub const THREADS_ENV: &str = "VIBOUND_THREADS";

/// `--threads` wins over `VIBOUND_THREADS`; zero or unset means one thread
/// per core.
pub fn resolve_threads(flag: Option<usize>) -> std::result::Result<usize, String> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got `{v}`")),
        _ => Ok(0),
    }
}

pub fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
}

/// Ground truths with the reference chains run in parallel.
pub fn ground_truths(study: Study, config: &CaseStudyConfig) -> Result<Vec<ModelTruth>> {
    match study {
        Study::RobustRegression => case_study::ground_truths(study, config),
        Study::EightSchools => {
            let nc = config.target(CaseModel::EightSchoolsNonCentered)?;
            let centered = config.target(CaseModel::EightSchoolsCentered)?;
            let chains = (0..config.sampler.chains.max(1))
                .into_par_iter()
                .map(|c| {
                    let nc = config.target(CaseModel::EightSchoolsNonCentered)?;
                    oracles::run_chain(nc.as_ref(), &config.sampler, c)
                })
                .collect::<Result<Vec<_>>>()?;
            case_study::eight_schools_truths(nc.as_ref(), centered.as_ref(), &chains)
        }
    }
}

/// Same report as [`case_study::run_case_study`], with columns in parallel.
pub fn run_case_study(study: Study, config: &CaseStudyConfig) -> Result<CaseStudyReport> {
    let truths = ground_truths(study, config)?;
    let columns = case_study::columns(study)
        .par_iter()
        .enumerate()
        .map(|(i, spec)| case_study::outcome(spec, i, config, &truths))
        .collect();
    Ok(CaseStudyReport { study, ground_truths: truths, columns })
}
