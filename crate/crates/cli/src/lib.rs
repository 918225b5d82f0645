//! Experiment orchestration for the `mcmc-certify` library: configuration
//! loading, the canned comparison studies, and machine-readable outputs.
//!
//! Everything here works on `f64`; the generic numerics live in the library
//! crate.

pub mod config;
pub mod experiments;
pub mod output;
