//! KL and Rényi divergences: Gaussian closed forms, 1-D quadrature, and the
//! mean-field Gaussian fixed point for equicorrelated targets.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::Scalar1D;
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::quadrature::{self, Integral, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DivergenceKind {
    Kl,
    Renyi { alpha: f64 },
}

fn check_gaussian_dims(m1: &[f64], s1: &DMatrix<f64>, m2: &[f64], s2: &DMatrix<f64>) -> Result<()> {
    let d = m1.len();
    for got in [m2.len(), s1.nrows(), s1.ncols(), s2.nrows(), s2.ncols()] {
        if got != d {
            return Err(Error::DimensionMismatch { expected: d, got });
        }
    }
    Ok(())
}

fn log_det_chol(m: &DMatrix<f64>) -> Option<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let c = m.clone().cholesky()?;
    let ld = 2.0 * c.l().diagonal().iter().map(|v| libm::log(*v)).sum::<f64>();
    Some((ld, c))
}

/// `KL(N(m1, s1) ‖ N(m2, s2))`.
pub fn kl_gaussians(m1: &[f64], s1: &DMatrix<f64>, m2: &[f64], s2: &DMatrix<f64>) -> Result<f64> {
    check_gaussian_dims(m1, s1, m2, s2)?;
    let d = m1.len() as f64;
    let (ld1, _) = log_det_chol(s1).ok_or(Error::NotPositiveDefinite)?;
    let (ld2, c2) = log_det_chol(s2).ok_or(Error::NotPositiveDefinite)?;
    let diff = DVector::from_iterator(m1.len(), m2.iter().zip(m1).map(|(a, b)| a - b));
    let tr = c2.solve(s1).trace();
    let quad = diff.dot(&c2.solve(&diff));
    Ok(0.5 * (tr + quad - d + ld2 - ld1))
}

/// `D_α(N(m1, s1) ‖ N(m2, s2))`; `+∞` when `α·s2 + (1 − α)·s1` is not
/// positive definite.
pub fn renyi_gaussians(alpha: f64, m1: &[f64], s1: &DMatrix<f64>, m2: &[f64], s2: &DMatrix<f64>) -> Result<f64> {
    if !(alpha > 0.0) || alpha == 1.0 || !alpha.is_finite() {
        return Err(invalid(format!("Rényi order must be positive and different from 1, got {alpha}")));
    }
    check_gaussian_dims(m1, s1, m2, s2)?;
    let (ld1, _) = log_det_chol(s1).ok_or(Error::NotPositiveDefinite)?;
    let (ld2, _) = log_det_chol(s2).ok_or(Error::NotPositiveDefinite)?;
    let mixed = s2 * alpha + s1 * (1.0 - alpha);
    let Some((ld_mix, c_mix)) = log_det_chol(&mixed) else {
        return Ok(f64::INFINITY);
    };
    let diff = DVector::from_iterator(m1.len(), m2.iter().zip(m1).map(|(a, b)| a - b));
    let quad = diff.dot(&c_mix.solve(&diff));
    let value = 0.5 * alpha * quad - (ld_mix - (1.0 - alpha) * ld1 - alpha * ld2) / (2.0 * (alpha - 1.0));
    Ok(value.max(0.0))
}

/// Integration variable for a 1-D divergence between `a` and `b`.
enum Coordinates {
    /// `x = lo + e^s` when both supports start at the same finite point.
    LogShift { lo: f64 },
    Linear,
}

fn coordinates(a: &Scalar1D, b: &Scalar1D) -> Coordinates {
    let (lo_a, _) = a.support();
    let (lo_b, _) = b.support();
    if lo_a.is_finite() && lo_a == lo_b {
        Coordinates::LogShift { lo: lo_a }
    } else {
        Coordinates::Linear
    }
}

/// `∫ a(x) g(ln a(x), ln b(x)) dx` over the support of `a`, with `g`
/// written in log space. Returns `Divergent` for non-finite integrands.
fn integrate_against<G: Fn(f64, f64) -> f64>(a: &Scalar1D, b: &Scalar1D, g: G) -> Result<Integral> {
    let tol = Tolerance { abs: 1e-12, rel: 1e-11, max_intervals: 4000 };
    let q1 = a.quantile(0.25)?;
    let q2 = a.quantile(0.5)?;
    let q3 = a.quantile(0.75)?;
    let integrand = |x: f64| {
        let la = a.ln_pdf(x);
        if la == f64::NEG_INFINITY {
            return 0.0;
        }
        g(la, b.ln_pdf(x))
    };
    match coordinates(a, b) {
        Coordinates::LogShift { lo } => {
            let s = |x: f64| libm::log(x - lo);
            let center = s(q2);
            let scale = (s(q3) - s(q1)).max(1e-3);
            quadrature::integrate_line(
                |u| {
                    let x = lo + libm::exp(u);
                    if x <= lo {
                        return 0.0;
                    }
                    let v = integrand(x);
                    if v == 0.0 {
                        0.0
                    } else {
                        v * libm::exp(u)
                    }
                },
                center,
                scale,
                tol,
            )
        }
        Coordinates::Linear => quadrature::integrate_line(integrand, q2, (q3 - q1).max(1e-12), tol),
    }
}

/// KL or Rényi divergence between two 1-D distributions by quadrature; `+∞`
/// when the defining integral diverges.
pub fn divergence_1d_quadrature(kind: DivergenceKind, a: &Scalar1D, b: &Scalar1D) -> Result<f64> {
    match kind {
        DivergenceKind::Kl => {
            let r = integrate_against(a, b, |la, lb| {
                let v = libm::exp(la) * (la - lb);
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            })?;
            Ok(r.value())
        }
        DivergenceKind::Renyi { alpha } => {
            if !(alpha > 0.0) || alpha == 1.0 || !alpha.is_finite() {
                return Err(invalid(format!("Rényi order must be positive and different from 1, got {alpha}")));
            }
            let r = integrate_against(a, b, |la, lb| {
                let e = la + (alpha - 1.0) * (la - lb);
                if e.is_nan() {
                    f64::INFINITY
                } else {
                    libm::exp(e)
                }
            })?;
            match r {
                Integral::Divergent => Ok(f64::INFINITY),
                Integral::Finite { value, .. } => {
                    if value <= 0.0 {
                        return Ok(if alpha < 1.0 { f64::INFINITY } else { 0.0 });
                    }
                    Ok(libm::log(value) / (alpha - 1.0))
                }
            }
        }
    }
}

/// `KL(N(0, 1) ‖ t_h)` with the Gaussian expectation done by Gauss-Hermite.
pub fn kl_gaussian_vs_t(h: f64) -> Result<f64> {
    if !(h >= 2.0) || !h.is_finite() {
        return Err(invalid(format!("degrees of freedom must be at least 2, got {h}")));
    }
    let z = 0.5 * h;
    // lnΓ(z) − lnΓ(z + ½) + ½ ln z, asymptotic series for large z.
    let gamma_part = if z > 50.0 {
        1.0 / (8.0 * z) - 1.0 / (192.0 * z * z * z)
    } else {
        math::ln_gamma(z) - math::ln_gamma(z + 0.5) + 0.5 * libm::log(z)
    };
    let e = quadrature::normal_expectation(|x| libm::log1p(x * x / h), 200);
    Ok(gamma_part - 0.5 + 0.5 * (h + 1.0) * e)
}

/// `KL(q* ‖ N(0, Σ))` for the optimal mean-field Gaussian `q*` when `Σ` is
/// equicorrelated with unit variances and correlation `rho`.
pub fn mean_field_gaussian_kl(d: usize, rho: f64) -> Result<f64> {
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if d == 1 {
        return Ok(0.0);
    }
    let df = d as f64;
    if !(rho < 1.0 && rho > -1.0 / (df - 1.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    // det Σ = (1 − ρ)^{d−1} (1 + (d − 1)ρ); Λ_ii = (1 + (d − 2)ρ) / ((1 − ρ)(1 + (d − 1)ρ)).
    let ld = (df - 1.0) * libm::log1p(-rho) + libm::log1p((df - 1.0) * rho);
    let lam = (1.0 + (df - 2.0) * rho) / ((1.0 - rho) * (1.0 + (df - 1.0) * rho));
    Ok((0.5 * (ld + df * libm::log(lam))).max(0.0))
}

/// Marginal variances `1 / (Σ⁻¹)_ii` of the optimal mean-field Gaussian for `N(m, Σ)`.
pub fn mean_field_gaussian_fixed_point(cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let c = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let prec = c.inverse();
    Ok((0..cov.nrows()).map(|i| 1.0 / prec[(i, i)]).collect())
}
