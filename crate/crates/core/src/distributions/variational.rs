use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::chi_square;
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    MeanFieldT,
    MeanFieldGaussian,
    FullRankGaussian,
    FullRankT,
}

impl FamilyKind {
    pub fn is_t(self) -> bool {
        matches!(self, FamilyKind::MeanFieldT | FamilyKind::FullRankT)
    }

    pub fn is_full_rank(self) -> bool {
        matches!(self, FamilyKind::FullRankGaussian | FamilyKind::FullRankT)
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::MeanFieldT => "mean_field_t",
            FamilyKind::MeanFieldGaussian => "mean_field_gaussian",
            FamilyKind::FullRankGaussian => "full_rank_gaussian",
            FamilyKind::FullRankT => "full_rank_t",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean_field_t" | "mf-t" | "mean-field-t" => Some(FamilyKind::MeanFieldT),
            "mean_field_gaussian" | "mf-gaussian" | "mean-field-gaussian" => Some(FamilyKind::MeanFieldGaussian),
            "full_rank_gaussian" | "fr-gaussian" | "full-rank-gaussian" => Some(FamilyKind::FullRankGaussian),
            "full_rank_t" | "fr-t" | "full-rank-t" => Some(FamilyKind::FullRankT),
            _ => None,
        }
    }
}

/// A variational family: the kind plus the fixed degrees of freedom for t kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
}

impl FamilySpec {
    pub fn mean_field_t(df: f64) -> Self {
        Self { kind: FamilyKind::MeanFieldT, df: Some(df) }
    }
    pub fn mean_field_gaussian() -> Self {
        Self { kind: FamilyKind::MeanFieldGaussian, df: None }
    }
    pub fn full_rank_gaussian() -> Self {
        Self { kind: FamilyKind::FullRankGaussian, df: None }
    }
    pub fn full_rank_t(df: f64) -> Self {
        Self { kind: FamilyKind::FullRankT, df: Some(df) }
    }

    /// Family member with the given location and an isotropic scale.
    pub fn initial(&self, loc: Vec<f64>, scale: f64) -> Result<VariationalDistribution> {
        let d = loc.len();
        let s = if self.kind.is_full_rank() {
            let mut m = vec![vec![0.0; d]; d];
            for (i, row) in m.iter_mut().enumerate() {
                row[i] = scale;
            }
            ScaleParam::Factor(m)
        } else {
            ScaleParam::Diagonal(vec![scale; d])
        };
        VariationalDistribution::new(self.kind, loc, s, self.df)
    }
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self::mean_field_t(40.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleParam {
    /// Per-coordinate scales of a mean-field family.
    Diagonal(Vec<f64>),
    /// Lower-triangular factor, row by row.
    Factor(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalDistribution {
    kind: FamilyKind,
    loc: Vec<f64>,
    scale: ScaleParam,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    df: Option<f64>,
}

/// Draws from a variational distribution together with the standardized
/// noise they were built from. Matrices are row-major `t × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub t: usize,
    pub d: usize,
    pub draws: Vec<f64>,
    /// Standardized noise `ε` with `draws = loc + scale · ε`.
    pub base_noise: Vec<f64>,
    /// Chi-square mixing draws for t kinds (per entry for mean-field, per row
    /// for full-rank); empty for Gaussian kinds.
    pub mixing: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
}

impl SampleBatch {
    pub fn draw(&self, i: usize) -> &[f64] {
        &self.draws[i * self.d..(i + 1) * self.d]
    }

    pub fn noise(&self, i: usize) -> &[f64] {
        &self.base_noise[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.chunks_exact(self.d)
    }
}

impl VariationalDistribution {
    pub fn new(kind: FamilyKind, loc: Vec<f64>, scale: ScaleParam, df: Option<f64>) -> Result<Self> {
        let d = loc.len();
        if d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if loc.iter().any(|v| !v.is_finite()) {
            return Err(invalid("location must be finite"));
        }
        match (&scale, kind.is_full_rank()) {
            (ScaleParam::Diagonal(s), false) => {
                if s.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: s.len() });
                }
                if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(invalid("mean-field scales must be positive and finite"));
                }
            }
            (ScaleParam::Factor(l), true) => {
                if l.len() != d || l.iter().any(|r| r.len() != d) {
                    return Err(invalid(format!("factor must be {d}x{d}")));
                }
                for (i, row) in l.iter().enumerate() {
                    if !(row[i].is_finite() && row[i] > 0.0) {
                        return Err(invalid("factor diagonal must be positive and finite"));
                    }
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(invalid("factor entries must be finite"));
                    }
                    if row[i + 1..].iter().any(|v| *v != 0.0) {
                        return Err(invalid("factor must be lower triangular"));
                    }
                }
            }
            _ => return Err(invalid("scale parameterization does not match the family kind")),
        }
        match (kind.is_t(), df) {
            (true, Some(h)) if h.is_finite() && h > 2.0 => {}
            (true, Some(h)) => return Err(invalid(format!("degrees of freedom must exceed 2, got {h}"))),
            (true, None) => return Err(invalid("t families need degrees of freedom")),
            (false, Some(_)) => return Err(invalid("Gaussian families take no degrees of freedom")),
            (false, None) => {}
        }
        Ok(Self { kind, loc, scale, df })
    }

    pub fn mean_field_gaussian(loc: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        Self::new(FamilyKind::MeanFieldGaussian, loc, ScaleParam::Diagonal(scale), None)
    }

    pub fn mean_field_t(loc: Vec<f64>, scale: Vec<f64>, df: f64) -> Result<Self> {
        Self::new(FamilyKind::MeanFieldT, loc, ScaleParam::Diagonal(scale), Some(df))
    }

    pub fn full_rank_gaussian(loc: Vec<f64>, factor: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(FamilyKind::FullRankGaussian, loc, ScaleParam::Factor(factor), None)
    }

    pub fn full_rank_t(loc: Vec<f64>, factor: Vec<Vec<f64>>, df: f64) -> Result<Self> {
        Self::new(FamilyKind::FullRankT, loc, ScaleParam::Factor(factor), Some(df))
    }

    /// Full-rank Gaussian from a mean and a positive-definite covariance.
    pub fn gaussian_from_cov(loc: Vec<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let d = loc.len();
        let rows = (0..d).map(|i| (0..d).map(|j| if j <= i { l[(i, j)] } else { 0.0 }).collect()).collect();
        Self::full_rank_gaussian(loc, rows)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn family(&self) -> FamilySpec {
        FamilySpec { kind: self.kind, df: self.df }
    }

    pub fn dim(&self) -> usize {
        self.loc.len()
    }

    pub fn loc(&self) -> &[f64] {
        &self.loc
    }

    pub fn scale(&self) -> &ScaleParam {
        &self.scale
    }

    pub fn df(&self) -> Option<f64> {
        self.df
    }

    /// Lower-triangular scale matrix (diagonal for mean-field kinds).
    pub fn scale_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        match &self.scale {
            ScaleParam::Diagonal(s) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(s)),
            ScaleParam::Factor(l) => DMatrix::from_fn(d, d, |i, j| l[i][j]),
        }
    }

    pub fn log_det_scale(&self) -> f64 {
        match &self.scale {
            ScaleParam::Diagonal(s) => s.iter().map(|v| libm::log(*v)).sum(),
            ScaleParam::Factor(l) => (0..self.dim()).map(|i| libm::log(l[i][i])).sum(),
        }
    }

    /// Number of optimized parameters: location, log-scales and (full-rank)
    /// strictly-lower factor entries.
    pub fn n_params(&self) -> usize {
        let d = self.dim();
        if self.kind.is_full_rank() {
            2 * d + d * (d - 1) / 2
        } else {
            2 * d
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let d = self.dim();
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.loc);
        match &self.scale {
            ScaleParam::Diagonal(s) => p.extend(s.iter().map(|v| libm::log(*v))),
            ScaleParam::Factor(l) => {
                p.extend((0..d).map(|i| libm::log(l[i][i])));
                for (i, row) in l.iter().enumerate() {
                    p.extend_from_slice(&row[..i]);
                }
            }
        }
        p
    }

    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.n_params() {
            return Err(Error::DimensionMismatch { expected: self.n_params(), got: p.len() });
        }
        let d = self.dim();
        let loc = p[..d].to_vec();
        let scale = if self.kind.is_full_rank() {
            let mut l = vec![vec![0.0; d]; d];
            let mut k = 2 * d;
            for i in 0..d {
                l[i][i] = libm::exp(p[d + i]);
                for j in 0..i {
                    l[i][j] = p[k];
                    k += 1;
                }
            }
            ScaleParam::Factor(l)
        } else {
            ScaleParam::Diagonal(p[d..].iter().map(|v| libm::exp(*v)).collect())
        };
        Self::new(self.kind, loc, scale, self.df)
    }

    /// Distribution of `c · X` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid("scale factor must be positive"));
        }
        let loc = self.loc.iter().map(|v| c * v).collect();
        let scale = match &self.scale {
            ScaleParam::Diagonal(s) => ScaleParam::Diagonal(s.iter().map(|v| c * v).collect()),
            ScaleParam::Factor(l) => ScaleParam::Factor(l.iter().map(|r| r.iter().map(|v| c * v).collect()).collect()),
        };
        Self::new(self.kind, loc, scale, self.df)
    }

    /// Same location, scale multiplied by `c`.
    pub fn widened(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid("scale factor must be positive"));
        }
        let mut w = self.scaled(c)?;
        w.loc = self.loc.clone();
        Ok(w)
    }

    /// `out = loc + scale · eps`.
    pub fn transform_noise(&self, eps: &[f64], out: &mut [f64]) {
        match &self.scale {
            ScaleParam::Diagonal(s) => {
                for i in 0..self.dim() {
                    out[i] = self.loc[i] + s[i] * eps[i];
                }
            }
            ScaleParam::Factor(l) => {
                for (i, row) in l.iter().enumerate() {
                    let mut acc = self.loc[i];
                    for j in 0..=i {
                        acc += row[j] * eps[j];
                    }
                    out[i] = acc;
                }
            }
        }
    }

    /// Standardized noise for a point: the inverse of [`Self::transform_noise`].
    pub fn standardize(&self, x: &[f64], out: &mut [f64]) {
        match &self.scale {
            ScaleParam::Diagonal(s) => {
                for i in 0..self.dim() {
                    out[i] = (x[i] - self.loc[i]) / s[i];
                }
            }
            ScaleParam::Factor(l) => {
                for (i, row) in l.iter().enumerate() {
                    let mut acc = x[i] - self.loc[i];
                    for j in 0..i {
                        acc -= row[j] * out[j];
                    }
                    out[i] = acc / row[i];
                }
            }
        }
    }

    /// Log density of the standardized noise (before the scale Jacobian).
    pub fn noise_log_density(&self, eps: &[f64]) -> f64 {
        let d = self.dim() as f64;
        match (self.kind, self.df) {
            (FamilyKind::MeanFieldGaussian | FamilyKind::FullRankGaussian, _) => {
                -0.5 * (d * math::LN_2PI + eps.iter().map(|e| e * e).sum::<f64>())
            }
            (FamilyKind::MeanFieldT, Some(h)) => eps.iter().map(|e| math::student_t_ln_pdf(*e, h)).sum(),
            (FamilyKind::FullRankT, Some(h)) => {
                let r2: f64 = eps.iter().map(|e| e * e).sum();
                math::ln_gamma(0.5 * (h + d)) - math::ln_gamma(0.5 * h) - 0.5 * d * (libm::log(h) + math::LN_PI)
                    - 0.5 * (h + d) * libm::log1p(r2 / h)
            }
            _ => f64::NAN,
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut eps = vec![0.0; self.dim()];
        self.standardize(x, &mut eps);
        self.noise_log_density(&eps) - self.log_det_scale()
    }

    /// Deterministic batch of `t` draws on the default sampling stream.
    pub fn sample(&self, t: usize, seed: u64) -> SampleBatch {
        self.sample_stream(t, seed, streams::SAMPLE)
    }

    pub fn sample_stream(&self, t: usize, seed: u64, stream: u64) -> SampleBatch {
        let mut rng = rng::stream_rng(seed, stream);
        let (base_noise, mixing) = self.draw_noise(t, &mut rng);
        let d = self.dim();
        let mut draws = vec![0.0; t * d];
        for (eps, out) in base_noise.chunks_exact(d).zip(draws.chunks_exact_mut(d)) {
            self.transform_noise(eps, out);
        }
        SampleBatch { t, d, draws, base_noise, mixing, seed, stream }
    }

    /// Standardized noise rows (`t × d`, row-major) and the chi-square mixing
    /// draws behind them.
    pub fn draw_noise<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut base_noise = Vec::with_capacity(t * d);
        let mut mixing = Vec::new();
        for _ in 0..t {
            match (self.kind, self.df) {
                (FamilyKind::MeanFieldT, Some(h)) => {
                    for _ in 0..d {
                        let z: f64 = StandardNormal.sample(rng);
                        let v = chi_square(rng, h);
                        mixing.push(v);
                        base_noise.push(z / libm::sqrt(v / h));
                    }
                }
                (FamilyKind::FullRankT, Some(h)) => {
                    let start = base_noise.len();
                    for _ in 0..d {
                        let z: f64 = StandardNormal.sample(rng);
                        base_noise.push(z);
                    }
                    let v = chi_square(rng, h);
                    mixing.push(v);
                    let f = 1.0 / libm::sqrt(v / h);
                    for e in &mut base_noise[start..] {
                        *e *= f;
                    }
                }
                _ => {
                    for _ in 0..d {
                        let z: f64 = StandardNormal.sample(rng);
                        base_noise.push(z);
                    }
                }
            }
        }
        (base_noise, mixing)
    }

    /// Variance multiplier `h / (h - 2)` of the standardized noise (1 for Gaussians).
    pub fn noise_variance(&self) -> Result<f64> {
        match self.df {
            None => Ok(1.0),
            Some(h) if h > 2.0 => Ok(h / (h - 2.0)),
            Some(h) => Err(Error::VarianceUndefined { df: h }),
        }
    }

    /// Mean and covariance.
    pub fn moments(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let c = self.noise_variance()?;
        let l = self.scale_matrix();
        let cov = (&l * l.transpose()) * c;
        Ok((self.loc.clone(), cov))
    }

    /// One-dimensional marginal of coordinate `i`.
    pub fn marginal(&self, i: usize) -> Result<super::Scalar1D> {
        if i >= self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: i + 1 });
        }
        let s = match &self.scale {
            ScaleParam::Diagonal(s) => s[i],
            ScaleParam::Factor(l) => libm::sqrt(l[i][..=i].iter().map(|v| v * v).sum()),
        };
        match self.df {
            Some(df) => super::Scalar1D::student_t(self.loc[i], s, df),
            None => super::Scalar1D::normal(self.loc[i], s),
        }
    }

    pub fn marginal_variances(&self) -> Result<Vec<f64>> {
        let (_, cov) = self.moments()?;
        Ok((0..self.dim()).map(|i| cov[(i, i)]).collect())
    }

    /// `E‖X − loc‖²`.
    pub fn central_second_moment(&self) -> Result<f64> {
        Ok(self.marginal_variances()?.iter().sum())
    }

    /// `E‖X − loc‖⁴`, `+∞` when `df ≤ 4`.
    pub fn central_fourth_moment(&self) -> f64 {
        if let Some(h) = self.df {
            if h <= 4.0 {
                return f64::INFINITY;
            }
        }
        match &self.scale {
            ScaleParam::Diagonal(s) => {
                // Independent coordinates: Σ m4_i + (Σ m2_i)² − Σ m2_i².
                let (v_mult, k_mult) = match self.df {
                    None => (1.0, 3.0),
                    Some(h) => (h / (h - 2.0), 3.0 * h * h / ((h - 2.0) * (h - 4.0))),
                };
                let m2: Vec<f64> = s.iter().map(|v| v_mult * v * v).collect();
                let m4: f64 = s.iter().map(|v| k_mult * v * v * v * v).sum();
                let sum2: f64 = m2.iter().sum();
                m4 + sum2 * sum2 - m2.iter().map(|v| v * v).sum::<f64>()
            }
            ScaleParam::Factor(_) => {
                // Gaussian with covariance S: 2 tr(S²) + (tr S)²; the t mixture
                // multiplies by E[(h/V)²] = h² / ((h − 2)(h − 4)).
                let l = self.scale_matrix();
                let s = &l * l.transpose();
                let tr = s.trace();
                let tr2 = (&s * &s).trace();
                let mult = match self.df {
                    None => 1.0,
                    Some(h) => h * h / ((h - 2.0) * (h - 4.0)),
                };
                mult * (2.0 * tr2 + tr * tr)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn examples() -> Vec<VariationalDistribution> {
        vec![
            VariationalDistribution::mean_field_gaussian(vec![1.0, -2.0, 0.5], vec![0.5, 2.0, 1.0]).unwrap(),
            VariationalDistribution::mean_field_t(vec![0.0, 3.0], vec![1.5, 0.2], 7.0).unwrap(),
            VariationalDistribution::full_rank_gaussian(vec![0.1, 0.2], vec![vec![2.0, 0.0], vec![1.0, 1.0]]).unwrap(),
            VariationalDistribution::full_rank_t(
                vec![0.0, 1.0, 2.0],
                vec![vec![1.0, 0.0, 0.0], vec![0.5, 0.7, 0.0], vec![-0.3, 0.2, 1.3]],
                9.0,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn log_density_examples() {
        let q = VariationalDistribution::mean_field_gaussian(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!((q.log_density(&[0.0, 0.0]) + math::LN_2PI).abs() < 1e-14);
        // Full-rank Gaussian agrees with the mean-field one when the factor is diagonal.
        let f = VariationalDistribution::full_rank_gaussian(vec![1.0, 2.0], vec![vec![2.0, 0.0], vec![0.0, 0.5]]).unwrap();
        let m = VariationalDistribution::mean_field_gaussian(vec![1.0, 2.0], vec![2.0, 0.5]).unwrap();
        assert!((f.log_density(&[0.3, -1.0]) - m.log_density(&[0.3, -1.0])).abs() < 1e-13);
        // A 1-D full-rank t is the scalar t.
        let t = VariationalDistribution::full_rank_t(vec![1.0], vec![vec![2.0]], 5.0).unwrap();
        let s = crate::distributions::Scalar1D::student_t(1.0, 2.0, 5.0).unwrap();
        assert!((t.log_density(&[4.0]) - s.ln_pdf(4.0)).abs() < 1e-13);
    }

    #[test]
    fn marginal_variances_match_covariance() {
        for q in examples() {
            let v = q.marginal_variances().unwrap();
            for (i, vi) in v.iter().enumerate() {
                let m = q.marginal(i).unwrap();
                assert!((m.variance() - vi).abs() < 1e-12 * vi.max(1.0));
                assert_eq!(m.mean(), q.loc()[i]);
            }
            assert!(q.marginal(q.dim()).is_err());
        }
    }

    #[test]
    fn full_rank_density_matches_dense_formula() {
        let q = &examples()[2];
        let (mu, cov) = q.moments().unwrap();
        let x = [1.0, -0.5];
        let diff = nalgebra::DVector::from_vec(vec![x[0] - mu[0], x[1] - mu[1]]);
        let quad = (diff.transpose() * cov.clone().try_inverse().unwrap() * &diff)[(0, 0)];
        let exact = -math::LN_2PI - 0.5 * libm::log(cov.determinant()) - 0.5 * quad;
        assert!((q.log_density(&x) - exact).abs() < 1e-12);
    }

    #[test]
    fn moments_examples() {
        let q = VariationalDistribution::mean_field_t(vec![0.0; 3], vec![1.0; 3], 40.0).unwrap();
        let v = q.marginal_variances().unwrap();
        assert!(v.iter().all(|x| (x - 40.0 / 38.0).abs() < 1e-15));
        let (_, cov) = examples()[2].moments().unwrap();
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 2.0]));
        let g = &examples()[0];
        let (_, cov) = g.moments().unwrap();
        assert_eq!(cov[(1, 1)], 4.0);
        assert_eq!(cov[(0, 1)], 0.0);
    }

    #[test]
    fn variance_undefined_at_low_df() {
        let q = VariationalDistribution::mean_field_t(vec![0.0], vec![1.0], 2.0);
        assert!(q.is_err());
    }

    #[test]
    fn params_round_trip() {
        for q in examples() {
            let p = q.params();
            assert_eq!(p.len(), q.n_params());
            let r = q.with_params(&p).unwrap();
            for (a, b) in r.params().iter().zip(&p) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_reparameterized() {
        for q in examples() {
            let a = q.sample(1000, 7);
            let b = q.sample(1000, 7);
            assert_eq!(a, b);
            let mut out = vec![0.0; q.dim()];
            for i in 0..a.t {
                q.transform_noise(a.noise(i), &mut out);
                assert_eq!(out.as_slice(), a.draw(i));
            }
        }
    }

    #[test]
    fn sample_moments_match() {
        let t = 100_000;
        let q = VariationalDistribution::mean_field_gaussian(vec![1.0, -2.0], vec![0.5, 2.0]).unwrap();
        let s = q.sample(t, 3);
        for j in 0..2 {
            let m: f64 = s.rows().map(|r| r[j]).sum::<f64>() / t as f64;
            let sd = q.marginal_variances().unwrap()[j].sqrt();
            assert!((m - q.loc()[j]).abs() < 4.0 * sd / (t as f64).sqrt());
        }
        let q = VariationalDistribution::mean_field_t(vec![0.0], vec![2.0], 40.0).unwrap();
        let s = q.sample(t, 5);
        let (_, var) = math::mean_var(&s.draws);
        assert!((var / (4.0 * 40.0 / 38.0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn fourth_moment_matches_monte_carlo() {
        for q in examples() {
            let exact = q.central_fourth_moment();
            let s = q.sample(200_000, 9);
            let vals: Vec<f64> = s
                .rows()
                .map(|r| {
                    let n2: f64 = r.iter().zip(q.loc()).map(|(x, m)| (x - m) * (x - m)).sum();
                    n2 * n2
                })
                .collect();
            let (m, v) = math::mean_var(&vals);
            let se = (v / vals.len() as f64).sqrt();
            assert!((m - exact).abs() < 4.0 * se, "{:?}: {m} vs {exact} (se {se})", q.kind());
        }
    }
}
