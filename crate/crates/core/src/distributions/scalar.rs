use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{self, check_probability};
use crate::quadrature::{self, Tolerance};
use crate::rng::{self, streams};

/// A one-dimensional distribution used by fixtures and the 1-D oracles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Scalar1D {
    Normal { loc: f64, scale: f64 },
    StudentT { loc: f64, scale: f64, df: f64 },
    /// Weibull with shape `k` and scale `lambda`.
    Weibull { shape: f64, scale: f64 },
    HalfCauchy { loc: f64, scale: f64 },
    GeneralizedPareto { loc: f64, scale: f64, shape: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(alloc::format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(alloc::format!("{name} must be finite, got {v}")))
    }
}

impl Scalar1D {
    pub fn normal(loc: f64, scale: f64) -> Result<Self> {
        finite("loc", loc)?;
        positive("scale", scale)?;
        Ok(Self::Normal { loc, scale })
    }

    pub fn student_t(loc: f64, scale: f64, df: f64) -> Result<Self> {
        finite("loc", loc)?;
        positive("scale", scale)?;
        positive("df", df)?;
        Ok(Self::StudentT { loc, scale, df })
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        positive("shape", shape)?;
        positive("scale", scale)?;
        Ok(Self::Weibull { shape, scale })
    }

    pub fn half_cauchy(loc: f64, scale: f64) -> Result<Self> {
        finite("loc", loc)?;
        positive("scale", scale)?;
        Ok(Self::HalfCauchy { loc, scale })
    }

    pub fn generalized_pareto(loc: f64, scale: f64, shape: f64) -> Result<Self> {
        finite("loc", loc)?;
        positive("scale", scale)?;
        finite("shape", shape)?;
        Ok(Self::GeneralizedPareto { loc, scale, shape })
    }

    /// Re-check the invariants, e.g. after deserialization.
    pub fn validated(self) -> Result<Self> {
        match self {
            Self::Normal { loc, scale } => Self::normal(loc, scale),
            Self::StudentT { loc, scale, df } => Self::student_t(loc, scale, df),
            Self::Weibull { shape, scale } => Self::weibull(shape, scale),
            Self::HalfCauchy { loc, scale } => Self::half_cauchy(loc, scale),
            Self::GeneralizedPareto { loc, scale, shape } => Self::generalized_pareto(loc, scale, shape),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Normal { .. } => "normal",
            Self::StudentT { .. } => "student_t",
            Self::Weibull { .. } => "weibull",
            Self::HalfCauchy { .. } => "half_cauchy",
            Self::GeneralizedPareto { .. } => "generalized_pareto",
        }
    }

    /// Closed support interval.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Normal { .. } | Self::StudentT { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Self::Weibull { .. } => (0.0, f64::INFINITY),
            Self::HalfCauchy { loc, .. } => (loc, f64::INFINITY),
            Self::GeneralizedPareto { loc, scale, shape } => {
                if shape < 0.0 {
                    (loc, loc - scale / shape)
                } else {
                    (loc, f64::INFINITY)
                }
            }
        }
    }

    /// Distribution of `c * X` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        positive("scale factor", c)?;
        Ok(match *self {
            Self::Normal { loc, scale } => Self::Normal { loc: c * loc, scale: c * scale },
            Self::StudentT { loc, scale, df } => Self::StudentT { loc: c * loc, scale: c * scale, df },
            Self::Weibull { shape, scale } => Self::Weibull { shape, scale: c * scale },
            Self::HalfCauchy { loc, scale } => Self::HalfCauchy { loc: c * loc, scale: c * scale },
            Self::GeneralizedPareto { loc, scale, shape } => Self::GeneralizedPareto {
                loc: c * loc,
                scale: c * scale,
                shape,
            },
        })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { loc, scale } => {
                let z = (x - loc) / scale;
                math::std_normal_ln_pdf(z) - libm::log(scale)
            }
            Self::StudentT { loc, scale, df } => math::student_t_ln_pdf((x - loc) / scale, df) - libm::log(scale),
            Self::Weibull { shape, scale } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = x / scale;
                if z == 0.0 {
                    return if shape < 1.0 {
                        f64::INFINITY
                    } else if shape == 1.0 {
                        -libm::log(scale)
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                libm::log(shape) - libm::log(scale) + (shape - 1.0) * libm::log(z) - libm::pow(z, shape)
            }
            Self::HalfCauchy { loc, scale } => {
                if x < loc {
                    return f64::NEG_INFINITY;
                }
                let z = (x - loc) / scale;
                core::f64::consts::LN_2 - math::LN_PI - libm::log(scale) - libm::log1p(z * z)
            }
            Self::GeneralizedPareto { loc, scale, shape } => {
                let z = (x - loc) / scale;
                if z < 0.0 {
                    return f64::NEG_INFINITY;
                }
                if shape == 0.0 {
                    return -libm::log(scale) - z;
                }
                let t = shape * z;
                if t <= -1.0 {
                    return f64::NEG_INFINITY;
                }
                -libm::log(scale) - (1.0 / shape + 1.0) * libm::log1p(t)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { loc, scale } => math::std_normal_cdf((x - loc) / scale),
            Self::StudentT { loc, scale, df } => math::student_t_cdf((x - loc) / scale, df),
            Self::Weibull { .. } | Self::HalfCauchy { .. } | Self::GeneralizedPareto { .. } => {
                let (lo, hi) = self.support();
                if x <= lo {
                    0.0
                } else if x >= hi {
                    1.0
                } else {
                    match *self {
                        Self::Weibull { shape, scale } => -libm::expm1(-libm::pow(x / scale, shape)),
                        Self::HalfCauchy { loc, scale } => {
                            2.0 / core::f64::consts::PI * libm::atan((x - loc) / scale)
                        }
                        _ => 1.0 - self.sf(x),
                    }
                }
            }
        }
    }

    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { loc, scale } => math::std_normal_sf((x - loc) / scale),
            Self::StudentT { loc, scale, df } => math::student_t_sf((x - loc) / scale, df),
            Self::Weibull { shape, scale } => {
                if x <= 0.0 {
                    1.0
                } else {
                    libm::exp(-libm::pow(x / scale, shape))
                }
            }
            Self::HalfCauchy { loc, scale } => {
                if x <= loc {
                    1.0
                } else {
                    2.0 / core::f64::consts::PI * libm::atan(scale / (x - loc))
                }
            }
            Self::GeneralizedPareto { loc, scale, shape } => {
                let z = (x - loc) / scale;
                if z <= 0.0 {
                    return 1.0;
                }
                if shape == 0.0 {
                    return libm::exp(-z);
                }
                let t = shape * z;
                if t <= -1.0 {
                    return 0.0;
                }
                libm::exp(-libm::log1p(t) / shape)
            }
        }
    }

    /// Inverse CDF.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        check_probability(u)?;
        Ok(match *self {
            Self::Normal { loc, scale } => loc + scale * math::std_normal_quantile(u),
            Self::StudentT { loc, scale, df } => loc + scale * math::student_t_quantile(u, df),
            Self::Weibull { shape, scale } => scale * libm::pow(-libm::log1p(-u), 1.0 / shape),
            Self::HalfCauchy { loc, scale } => loc + scale * libm::tan(core::f64::consts::FRAC_PI_2 * u),
            Self::GeneralizedPareto { loc, scale, shape } => loc + scale * gpd_excess_from_ln_sf(libm::log1p(-u), shape),
        })
    }

    /// Inverse survival function, `quantile(1 - q)` without the cancellation.
    pub fn isf(&self, q: f64) -> Result<f64> {
        check_probability(q)?;
        Ok(match *self {
            Self::Normal { loc, scale } => loc - scale * math::std_normal_quantile(q),
            Self::StudentT { loc, scale, df } => loc + scale * math::student_t_isf(q, df),
            Self::Weibull { shape, scale } => scale * libm::pow(-libm::log(q), 1.0 / shape),
            Self::HalfCauchy { loc, scale } => loc + scale / libm::tan(core::f64::consts::FRAC_PI_2 * q),
            Self::GeneralizedPareto { loc, scale, shape } => loc + scale * gpd_excess_from_ln_sf(libm::log(q), shape),
        })
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5).unwrap_or(f64::NAN)
    }

    /// Mean, `+∞` when it does not exist.
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Normal { loc, .. } => loc,
            Self::StudentT { loc, df, .. } => {
                if df > 1.0 {
                    loc
                } else {
                    f64::INFINITY
                }
            }
            Self::Weibull { shape, scale } => scale * libm::exp(math::ln_gamma(1.0 + 1.0 / shape)),
            Self::HalfCauchy { .. } => f64::INFINITY,
            Self::GeneralizedPareto { loc, scale, shape } => {
                if shape < 1.0 {
                    loc + scale / (1.0 - shape)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Variance, `+∞` when it does not exist.
    pub fn variance(&self) -> f64 {
        match *self {
            Self::Normal { scale, .. } => scale * scale,
            Self::StudentT { scale, df, .. } => {
                if df > 2.0 {
                    scale * scale * df / (df - 2.0)
                } else {
                    f64::INFINITY
                }
            }
            Self::Weibull { shape, scale } => {
                let g1 = libm::exp(math::ln_gamma(1.0 + 1.0 / shape));
                let g2 = libm::exp(math::ln_gamma(1.0 + 2.0 / shape));
                scale * scale * (g2 - g1 * g1)
            }
            Self::HalfCauchy { .. } => f64::INFINITY,
            Self::GeneralizedPareto { scale, shape, .. } => {
                if shape < 0.5 {
                    scale * scale / ((1.0 - shape) * (1.0 - shape) * (1.0 - 2.0 * shape))
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn std_dev(&self) -> f64 {
        libm::sqrt(self.variance())
    }

    /// Mean absolute deviation about the mean.
    pub fn mad(&self) -> Result<f64> {
        match *self {
            Self::Normal { scale, .. } => Ok(scale * libm::sqrt(2.0 / core::f64::consts::PI)),
            Self::StudentT { scale, df, .. } => {
                if df <= 1.0 {
                    return Ok(f64::INFINITY);
                }
                let ln = core::f64::consts::LN_2 + 0.5 * libm::log(df) + math::ln_gamma(0.5 * (df + 1.0))
                    - 0.5 * math::LN_PI
                    - libm::log(df - 1.0)
                    - math::ln_gamma(0.5 * df);
                Ok(scale * libm::exp(ln))
            }
            _ => {
                let m = self.mean();
                if !m.is_finite() {
                    return Ok(f64::INFINITY);
                }
                // MAD = 2 ∫_{-∞}^{m} F(x) dx for a distribution with finite mean.
                let (lo, _) = self.support();
                let r = quadrature::integrate(|x| self.cdf(x), lo, m, Tolerance::default())?;
                Ok(2.0 * r.value())
            }
        }
    }

    /// `T` independent draws, deterministic in `seed`.
    pub fn sample(&self, t: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng::stream_rng(seed, streams::SAMPLE);
        (0..t)
            .map(|_| match *self {
                Self::Normal { loc, scale } => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    loc + scale * z
                }
                Self::StudentT { loc, scale, df } => loc + scale * super::standard_t_draw(&mut rng, df).0,
                _ => {
                    let u: f64 = rng.random::<f64>();
                    let u = if u == 0.0 { f64::MIN_POSITIVE } else { u };
                    self.quantile(u).unwrap_or(f64::NAN)
                }
            })
            .collect()
    }
}

/// GPD excess `z` with `ln sf(z) = ln_sf` for shape `k`.
fn gpd_excess_from_ln_sf(ln_sf: f64, k: f64) -> f64 {
    if k == 0.0 {
        -ln_sf
    } else {
        libm::expm1(-k * ln_sf) / k
    }
}
