//! Seeded, splittable random streams.
//!
//! A `(seed, stream)` pair fully determines every draw, so parallel work
//! that takes distinct stream indices stays reproducible whatever the thread
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream indices reserved for the different consumers of randomness.
pub mod streams {
    pub const SAMPLE: u64 = 0;
    pub const OPTIMIZER: u64 = 1 << 32;
    pub const DIAGNOSTIC_Q: u64 = 2 << 32;
    pub const DIAGNOSTIC_ETA: u64 = 3 << 32;
    pub const DATA: u64 = 4 << 32;
    pub const MCMC: u64 = 5 << 32;
    pub const MOMENTS: u64 = 6 << 32;
}

pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
