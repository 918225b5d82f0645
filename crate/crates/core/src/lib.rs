// Validation guards are written `!(x > y)` on purpose: a NaN must fail the
// check, and the negated form rejects it where `x <= y` would let it through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Certified error bounds for Markov chain Monte Carlo estimators.
//!
//! This crate computes explicit, non-asymptotic concentration certificates
//! for additive functionals of geometrically ergodic Markov chains, and
//! ships the samplers needed to exercise them:
//!
//! * [`models`]: target densities, symmetric proposals, Lyapunov functions,
//!   and drift-condition verification.
//! * [`constants`]: minorization constants, drift certificates, and the
//!   scale factor that converts a drift certificate into a deviation bound.
//! * [`samplers`]: random walk Metropolis, a regenerative variant that
//!   restarts from an atom, an independence rejection sampler, and a linear
//!   autoregressive reference chain.
//! * [`concentration`]: weighted-norm machinery, self-normalized confidence
//!   intervals, and a Monte Carlo verifier for the underlying exponential
//!   moment inequality.
//! * [`coupling`]: a bivariate coupled kernel for estimating the
//!   weak-dependence sum that the certificates bound.
//! * [`diagnostics`], [`config`], [`experiments`]: supporting statistics,
//!   declarative experiment configuration, and the prepackaged studies the
//!   command line tool exposes.
//!
//! All numeric code is generic over [`scalar::Scalar`]; the aliases below
//! fix `f64` for ordinary use.

pub mod concentration;
pub mod constants;
pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod models;
pub mod quad;
pub mod rng;
pub mod samplers;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use scalar::{SampleScalar, Scalar};

/// Default concrete scalar used by the command line tool and experiments.
pub type Real = f64;
