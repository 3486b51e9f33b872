//! Named models for the command line.

use std::path::Path;

use vibound_core::models::{
    ConjugateGaussian, EightSchoolsCentered, EightSchoolsData, EightSchoolsNonCentered, RobustRegression,
    RobustRegressionData, Target,
};

use crate::io::{read_json, IoError};

pub const MODEL_NAMES: [&str; 4] = ["conjugate", "eight-schools-centered", "eight-schools-noncentered", "robust-regression"];

/// Dimension, sample size and data seed of the conjugate fixture.
pub const CONJUGATE_FIXTURE: (usize, usize, u64) = (2, 10, 0);

#[derive(Debug)]
pub enum ModelError {
    Unknown(String),
    Data(IoError),
    Invalid(vibound_core::Error),
}

impl std::fmt::Display for ModelError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelError::Unknown(name) => write!(f, "unknown model `{name}`; expected one of {}", MODEL_NAMES.join(", ")),
            ModelError::Data(e) => write!(f, "{e}"),
            ModelError::Invalid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ModelError {}

/// Build a model by name. `data` optionally replaces the built-in data set
/// (eight-schools or robust-regression JSON).
pub fn build(name: &str, data: Option<&Path>) -> Result<Box<dyn Target>, ModelError> {
    let invalid = ModelError::Invalid;
    match name {
        "conjugate" => {
            if data.is_some() {
                return Err(ModelError::Invalid(vibound_core::Error::Unsupported(
                    "the conjugate fixture takes no data file".into(),
                )));
            }
            let (d, n, seed) = CONJUGATE_FIXTURE;
            Ok(Box::new(ConjugateGaussian::fixture(d, n, seed).map_err(invalid)?))
        }
        "eight-schools-centered" | "eight-schools-noncentered" => {
            let data = match data {
                Some(p) => read_json::<EightSchoolsData>(p).map_err(ModelError::Data)?,
                None => EightSchoolsData::canonical(),
            };
            if name.ends_with("noncentered") {
                Ok(Box::new(EightSchoolsNonCentered::new(data).map_err(invalid)?))
            } else {
                Ok(Box::new(EightSchoolsCentered::new(data).map_err(invalid)?))
            }
        }
        "robust-regression" => {
            let data = match data {
                Some(p) => read_json::<RobustRegressionData>(p).map_err(ModelError::Data)?,
                None => RobustRegressionData::default_case(),
            };
            Ok(Box::new(RobustRegression::with_defaults(data).map_err(invalid)?))
        }
        other => Err(ModelError::Unknown(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_model_builds() {
        for name in MODEL_NAMES {
            let m = build(name, None).unwrap();
            assert!(m.dim() > 0, "{name}");
        }
    }

    #[test]
    fn unknown_model_is_rejected() {
        assert!(matches!(build("ten-schools", None), Err(ModelError::Unknown(_))));
    }
}
