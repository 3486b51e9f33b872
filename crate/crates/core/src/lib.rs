//! Numerical core for validated variational inference.
//!
//! Fits mean-field and full-rank Gaussian/Student-t approximations by KLVI or
//! CHIVI, bounds the Rényi-2 divergence from ELBO/CUBO estimates, turns it into
//! Wasserstein and posterior-summary error bounds, and runs PSIS diagnostics.
#![cfg_attr(not(test), no_std)]

extern crate alloc;
pub mod bounds;
pub mod case_study;
pub mod distributions;
pub mod divergences;
pub mod error;
pub mod inference;
pub mod math;
pub mod models;
pub mod oracles;
pub mod psis;
pub mod quadrature;
pub mod rng;
pub mod serde_ext;
pub mod summary;
pub mod workflow;

pub use error::{Error, Result};
