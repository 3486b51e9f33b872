//! Scalar fixture distributions and the variational families.

mod scalar;
mod variational;

pub use scalar::Scalar1D;
pub use variational::{FamilyKind, FamilySpec, SampleBatch, ScaleParam, VariationalDistribution};

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// A standard Student-t draw as `z / sqrt(v / df)`, returning `(t, z, v)`.
pub(crate) fn standard_t_draw<R: Rng + ?Sized>(rng: &mut R, df: f64) -> (f64, f64, f64) {
    let z: f64 = StandardNormal.sample(rng);
    let v = chi_square(rng, df);
    (z / libm::sqrt(v / df), z, v)
}

pub(crate) fn chi_square<R: Rng + ?Sized>(rng: &mut R, df: f64) -> f64 {
    // df was validated positive at construction.
    ChiSquared::new(df).map(|c| c.sample(rng)).unwrap_or(f64::NAN)
}
