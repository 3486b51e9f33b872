//! Special functions and small numerical helpers.
//!
//! Everything here is pure `f64` arithmetic on top of `libm` so that the crate
//! stays `no_std`.

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
pub const LN_PI: f64 = 1.144_729_885_849_400_2;
pub const PI: f64 = core::f64::consts::PI;

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

#[inline]
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

#[inline]
pub fn std_normal_ln_pdf(x: f64) -> f64 {
    -0.5 * (LN_2PI + x * x)
}

#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

#[inline]
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

fn poly(coeffs: &[f64; 8], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Inverse of the standard normal CDF (Wichura's AS241, about 1e-16 relative),
/// followed by one Halley step against `erfc`.
pub fn std_normal_quantile(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    let x = if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        q * poly(&A, r) / poly(&B, r)
    } else {
        let r = if q < 0.0 { p } else { 1.0 - p };
        let r = libm::sqrt(-libm::log(r));
        let v = if r <= 5.0 {
            let r = r - 1.6;
            poly(&C, r) / poly(&D, r)
        } else {
            let r = r - 5.0;
            poly(&E, r) / poly(&F, r)
        };
        if q < 0.0 {
            -v
        } else {
            v
        }
    };
    // Halley refinement in the lower tail orientation keeps relative precision
    // for tiny p.
    if x.abs() < 37.0 {
        let (target, z) = if x < 0.0 { (p, x) } else { (1.0 - p, -x) };
        let err = std_normal_cdf(z) - target;
        let dens = libm::exp(std_normal_ln_pdf(z));
        if dens > 0.0 {
            let u = err / dens;
            let z_new = z - u / (1.0 + 0.5 * z * u);
            return if x < 0.0 { z_new } else { -z_new };
        }
    }
    x
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Log of the regularized incomplete beta `I_x(a, b)`, with `y = 1 - x`
/// supplied separately to avoid cancellation.
pub fn ln_reg_inc_beta(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if y <= 0.0 {
        return 0.0;
    }
    let ln_front = a * libm::log(x) + b * libm::log(y) - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front + libm::log(beta_continued_fraction(a, b, x)) - libm::log(a)
    } else {
        let rest = libm::exp(ln_front) * beta_continued_fraction(b, a, y) / b;
        libm::log1p(-rest)
    }
}

pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    libm::exp(ln_reg_inc_beta(a, b, x, 1.0 - x))
}

/// Log density of the standard Student t with `df` degrees of freedom.
pub fn student_t_ln_pdf(x: f64, df: f64) -> f64 {
    ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (libm::log(df) + LN_PI)
        - 0.5 * (df + 1.0) * libm::log1p(x * x / df)
}

/// Log survival function of the standard Student t.
pub fn student_t_ln_sf(x: f64, df: f64) -> f64 {
    if x == 0.0 {
        return -core::f64::consts::LN_2;
    }
    let t2 = x * x;
    let (bx, by) = (df / (df + t2), t2 / (df + t2));
    let ln_tail = -core::f64::consts::LN_2 + ln_reg_inc_beta(0.5 * df, 0.5, bx, by);
    if x > 0.0 {
        ln_tail
    } else {
        libm::log1p(-libm::exp(ln_tail))
    }
}

pub fn student_t_sf(x: f64, df: f64) -> f64 {
    libm::exp(student_t_ln_sf(x, df))
}

pub fn student_t_cdf(x: f64, df: f64) -> f64 {
    student_t_sf(-x, df)
}

/// Upper-tail quantile: the `t >= 0` with `sf(t) = q`, for `q` in `(0, 1/2]`.
fn student_t_upper(q: f64, df: f64) -> f64 {
    if q >= 0.5 {
        return 0.0;
    }
    if df == 1.0 {
        return 1.0 / libm::tan(PI * q);
    }
    let target = libm::log(q);
    let f = |t: f64| student_t_ln_sf(t, df) - target;
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let ft = f(t);
        if ft > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        // d/dt ln sf = -pdf / sf
        let slope = -libm::exp(student_t_ln_pdf(t, df) - student_t_ln_sf(t, df));
        let mut next = t - ft / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * next.abs().max(1e-300) {
            return next;
        }
        t = next;
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    t
}

/// Quantile of the standard Student t at `u`.
pub fn student_t_quantile(u: f64, df: f64) -> f64 {
    if u < 0.5 {
        -student_t_upper(u, df)
    } else {
        student_t_upper(1.0 - u, df)
    }
}

/// Inverse survival function of the standard Student t, accurate for tiny `q`.
pub fn student_t_isf(q: f64, df: f64) -> f64 {
    if q <= 0.5 {
        student_t_upper(q, df)
    } else {
        -student_t_upper(1.0 - q, df)
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}

pub fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - libm::log(values.len() as f64)
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub(crate) fn check_probability(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange(u))
    }
}
