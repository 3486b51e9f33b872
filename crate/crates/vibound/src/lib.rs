//! Command-line front end and IO for validated variational inference.
//!
//! The numerics live in [`vibound_core`]; this crate adds JSON and CSV
//! output, the shipped schemas, thread control, parallel case-study drivers
//! and the `vibound` binary.

pub mod cli;
pub mod io;
pub mod parallel;
pub mod registry;
pub mod tables;

pub use vibound_core as core;
