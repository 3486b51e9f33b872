//! One-dimensional quadrature: adaptive Gauss-Kronrod (21 point), doubling
//! windows for semi-infinite ranges, and fixed Gauss-Legendre / Gauss-Hermite
//! rules.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-10,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Non-finite integrand values surface as `Err(None)`.
fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> core::result::Result<Segment, ()> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(());
    }
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        if !f1.is_finite() || !f2.is_finite() {
            return Err(());
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Ok(Segment { a, b, value, error })
}

/// Outcome of an integration that may legitimately diverge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integral {
    Finite { value: f64, error: f64 },
    Divergent,
}

impl Integral {
    pub fn value(self) -> f64 {
        match self {
            Integral::Finite { value, .. } => value,
            Integral::Divergent => f64::INFINITY,
        }
    }
}

/// Adaptive Gauss-Kronrod integration over a finite interval.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral> {
    integrate_ref(&mut f, a, b, tol)
}

fn integrate_ref<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: Tolerance) -> Result<Integral> {
    if a == b {
        return Ok(Integral::Finite { value: 0.0, error: 0.0 });
    }
    let first = match gk21(f, a, b) {
        Ok(s) => s,
        Err(()) => return Ok(Integral::Divergent),
    };
    let mut segments: Vec<Segment> = alloc::vec![first];
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let err: f64 = segments.iter().map(|s| s.error).sum();
        if err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(Integral::Finite { value: total, error: err });
        }
        if segments.len() >= tol.max_intervals {
            // Accept a tiny residual; anything else is reported.
            if err <= 1e3 * tol.abs.max(tol.rel * total.abs()) {
                return Ok(Integral::Finite { value: total, error: err });
            }
            return Err(Error::QuadratureNonConvergence(format!(
                "error estimate {err:e} after {} subintervals on [{a}, {b}]",
                segments.len()
            )));
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, be), (i, s)| if s.error > be { (i, s.error) } else { (bi, be) });
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            return Err(Error::QuadratureNonConvergence(format!(
                "interval [{}, {}] cannot be bisected further",
                s.a, s.b
            )));
        }
        match (gk21(f, s.a, mid), gk21(f, mid, s.b)) {
            (Ok(l), Ok(r)) => {
                segments.push(l);
                segments.push(r);
            }
            _ => return Ok(Integral::Divergent),
        }
    }
}

const GROWTH_FACTOR: f64 = 1.5;
const GROWTH_WINDOWS: usize = 5;
const MAX_WINDOWS: usize = 80;

/// Integrate over `[a, ∞)` using windows of doubling width starting at
/// `scale`. Returns `Divergent` when the integrand becomes non-finite, when
/// window contributions grow for several consecutive windows, or when the
/// window cap is reached while contributions are not decreasing.
pub fn integrate_upper<F: FnMut(f64) -> f64>(mut f: F, a: f64, scale: f64, tol: Tolerance) -> Result<Integral> {
    let mut total = 0.0;
    let mut err_total = 0.0;
    let mut lo = a;
    let mut width = scale;
    let mut prev = f64::NAN;
    let mut growth_run = 0;
    let mut small_run = 0;
    for _ in 0..MAX_WINDOWS {
        let hi = lo + width;
        if !hi.is_finite() {
            break;
        }
        let window = match integrate_ref(&mut f, lo, hi, tol)? {
            Integral::Finite { value, error } => {
                err_total += error;
                value
            }
            Integral::Divergent => return Ok(Integral::Divergent),
        };
        total += window;
        if prev.is_finite() && window.abs() > GROWTH_FACTOR * prev.abs() && window.abs() > tol.abs {
            growth_run += 1;
            if growth_run >= GROWTH_WINDOWS {
                return Ok(Integral::Divergent);
            }
        } else {
            growth_run = 0;
        }
        if window.abs() <= 1e-3 * tol.abs.max(tol.rel * total.abs()) {
            small_run += 1;
            if small_run >= 2 {
                return Ok(Integral::Finite { value: total, error: err_total });
            }
        } else {
            small_run = 0;
        }
        prev = window;
        lo = hi;
        width *= 2.0;
    }
    if prev.is_finite() && prev.abs() > tol.abs.max(tol.rel * total.abs()) {
        Ok(Integral::Divergent)
    } else {
        Ok(Integral::Finite { value: total, error: err_total })
    }
}

/// Integrate over the whole real line, splitting at `center`.
pub fn integrate_line<F: FnMut(f64) -> f64>(mut f: F, center: f64, scale: f64, tol: Tolerance) -> Result<Integral> {
    let upper = integrate_upper(&mut f, center, scale, tol)?;
    if upper == Integral::Divergent {
        return Ok(upper);
    }
    let lower = integrate_upper(|x| f(2.0 * center - x), center, scale, tol)?;
    match (upper, lower) {
        (Integral::Finite { value: v1, error: e1 }, Integral::Finite { value: v2, error: e2 }) => {
            Ok(Integral::Finite { value: v1 + v2, error: e1 + e2 })
        }
        _ => Ok(Integral::Divergent),
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = alloc::vec![0.0; n];
    let mut w = alloc::vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss-Hermite nodes and weights for the weight function `exp(-x^2)`, from
/// the eigen-decomposition of the Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = libm::sqrt(k as f64 / 2.0);
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let sqrt_pi = libm::sqrt(core::f64::consts::PI);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], sqrt_pi * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `E[g(X)]` for `X ~ N(0, 1)` by Gauss-Hermite with `n` nodes.
pub fn normal_expectation<F: FnMut(f64) -> f64>(mut g: F, n: usize) -> f64 {
    let (x, w) = gauss_hermite(n);
    let s: f64 = x
        .iter()
        .zip(&w)
        .map(|(&xi, &wi)| wi * g(core::f64::consts::SQRT_2 * xi))
        .sum();
    s / libm::sqrt(core::f64::consts::PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_is_exact_on_polynomials() {
        let r = integrate(|x| 3.0 * x * x * x * x * x - x + 2.0, -1.0, 2.0, Tolerance::default()).unwrap();
        // 3 x^6/6 - x^2/2 + 2x on [-1, 2]
        let exact = (64.0 / 2.0 - 2.0 + 4.0) - (0.5 - 0.5 - 2.0);
        assert!((r.value() - exact).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let r = integrate(|x| 1.0 / libm::sqrt(x), 0.0, 1.0, Tolerance::default()).unwrap();
        assert!((r.value() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn semi_infinite_and_divergence() {
        let r = integrate_upper(|x| libm::exp(-x), 0.0, 1.0, Tolerance::default()).unwrap();
        assert!((r.value() - 1.0).abs() < 1e-10);
        let r = integrate_upper(|x| 1.0 / (1.0 + x * x), 0.0, 1.0, Tolerance::default()).unwrap();
        assert!((r.value() - core::f64::consts::FRAC_PI_2).abs() < 1e-8);
        let d = integrate_upper(|x| libm::exp(0.1 * x * x), 0.0, 1.0, Tolerance::default()).unwrap();
        assert_eq!(d, Integral::Divergent);
        let d = integrate_upper(|x| 1.0 / (1.0 + x), 0.0, 1.0, Tolerance::default()).unwrap();
        assert_eq!(d, Integral::Divergent);
    }

    #[test]
    fn whole_line_gaussian() {
        let r = integrate_line(|x| libm::exp(-0.5 * x * x), 0.3, 1.0, Tolerance::default()).unwrap();
        assert!((r.value() - libm::sqrt(2.0 * core::f64::consts::PI)).abs() < 1e-10);
    }

    #[test]
    fn legendre_rules() {
        let (x, w) = gauss_legendre(20);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
        let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(38)).sum();
        assert!((m - 2.0 / 39.0).abs() < 1e-13);
    }

    #[test]
    fn hermite_moments() {
        for &n in &[10usize, 64, 200] {
            assert!((normal_expectation(|_| 1.0, n) - 1.0).abs() < 1e-12, "n={n}");
            assert!((normal_expectation(|x| x * x, n) - 1.0).abs() < 1e-11);
            assert!((normal_expectation(|x| x.powi(4), n) - 3.0).abs() < 1e-10);
        }
        let e = normal_expectation(|x| libm::exp(0.3 * x), 200);
        assert!((e - libm::exp(0.045)).abs() < 1e-12);
    }
}
