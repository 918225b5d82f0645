//! Bivariate coupling of the linear autoregressive chain: two copies move
//! with the same one-step law, meet with the certified diagonal mass while
//! both sit in a small set, and stick together forever once they meet.
//! Simulating the pair checks the weak-dependence bound
//! `sum_k E[d_V(X_k, X_k')] <= K d_V(x, x')` empirically.

use crate::constants::minorization_constant_ar1;
use crate::diagnostics::{mean_se, sample_mean};
use crate::error::{Error, Result};
use crate::models::LyapunovFunction;
use crate::rng::RngStream;
use crate::samplers::ar1_step;
use crate::scalar::{SampleScalar, Scalar};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Attempt cap for the rejection samplers inside a coupled step. Hitting
/// it means the diagonal mass is so close to the kernel's pointwise
/// minimum that the residual kernel has almost no mass left.
pub const REJECTION_ATTEMPT_CAP: u64 = 1_000_000;

/// Replications processed per parallel work item. Partial sums are
/// combined in chunk order afterwards, so results do not depend on how
/// rayon schedules the chunks.
const CHUNK: usize = 256;

/// One state of the coupled pair. `coalesced` is absorbing and implies
/// the coordinates are bitwise equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct BivariateState<S> {
    pub x: S,
    pub x_prime: S,
    pub coalesced: bool,
}

impl<S: Scalar> BivariateState<S> {
    /// Start a pair without the coalescence flag, even when the
    /// coordinates happen to be equal; the flag is only ever set by a
    /// diagonal draw or by the constructor of a deliberately merged pair.
    pub fn new(x: S, x_prime: S) -> Self {
        BivariateState { x, x_prime, coalesced: false }
    }

    /// Check the absorbing-diagonal invariant.
    pub fn validate(&self) -> Result<()> {
        if self.coalesced && self.x != self.x_prime {
            return Err(Error::CertificateInvalid(format!(
                "coalesced pair has distinct coordinates ({}, {})",
                self.x, self.x_prime
            )));
        }
        Ok(())
    }
}

/// Small set `[-d, d]` for the autoregressive chain together with the
/// diagonal mass `c` the coupling places on it per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct SmallSetSpec<S> {
    pub d: S,
    pub c: S,
}

impl<S: Scalar> SmallSetSpec<S> {
    /// Build the spec at half-width `d`, taking `c` from the closed-form
    /// minorization constant. Fails when no coupling can realize that
    /// mass: the meeting measure is dominated by the pointwise minimum of
    /// the two extreme one-step laws, whose total mass shrinks as the set
    /// widens while the closed-form constant grows.
    pub fn new(d: S) -> Result<Self> {
        let c = minorization_constant_ar1(d)?.c;
        if !(c > S::zero() && c < S::one()) {
            return Err(Error::Config(format!(
                "diagonal mass {c} at half-width {d} must lie strictly inside (0, 1); \
                 the closed-form constant vanishes at d = 1"
            )));
        }
        let spec = SmallSetSpec { d, c };
        let capacity = spec.overlap_capacity();
        if c > capacity {
            return Err(Error::Config(format!(
                "diagonal mass {c} at half-width {d} exceeds the overlap capacity {capacity} \
                 of the one-step laws at the set's endpoints; no coupling realizes it \
                 (half-widths up to about 1.745 are realizable)"
            )));
        }
        Ok(spec)
    }

    /// Total mass of the pointwise minimum of the one-step laws started
    /// from the two endpoints, `2 (1 - Phi(d / sqrt(3)))`. This is the
    /// largest diagonal mass any coupling can place from within the set.
    pub fn overlap_capacity(&self) -> S {
        S::lit(2.0) * (S::one() - (self.d / S::lit(3.0).sqrt()).std_normal_cdf())
    }

    /// The sublevel-set level in quadratic-weight units paired with the
    /// half-width.
    pub fn paired_level(&self) -> S {
        (S::lit(2.0) + (self.d * self.d - S::one()) / S::lit(4.0)).sqrt()
    }

    pub fn contains(&self, x: S) -> bool {
        x.abs() <= self.d
    }

    /// Recheck a stored spec: `c` must match the closed-form constant for
    /// `d` to 1e-12 and stay realizable.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::new(self.d)?;
        if (rebuilt.c - self.c).abs() > S::lit(1e-12) {
            return Err(Error::CertificateInvalid(format!(
                "stored diagonal mass {} disagrees with the closed-form constant {} at d = {}",
                self.c, rebuilt.c, self.d
            )));
        }
        Ok(())
    }
}

/// How the two coordinates advance when the diagonal draw is unavailable,
/// that is outside the small set. Either way each coordinate's marginal
/// law is the exact one-step kernel; only the joint law differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffSmallSetMoves {
    /// Fresh innovation per coordinate.
    #[default]
    Independent,
    /// One shared innovation; equal coordinates then stay equal even
    /// before they are formally flagged.
    Synchronous,
}

/// Weighted coupling distance: zero on the diagonal, and the sum of the
/// weights off it.
pub fn d_v_metric<S: Scalar>(x: S, y: S, v: &LyapunovFunction<S>) -> S {
    if x == y {
        S::zero()
    } else {
        v.eval(x) + v.eval(y)
    }
}

/// Density of the one-step law `N(x/2, 3/4)` at `y`, up to the common
/// normal normalizer, as a log.
fn log_kernel_density_unnorm<S: Scalar>(x: S, y: S) -> S {
    let sigma_sq = S::lit(0.75);
    let t = y - x / S::lit(2.0);
    -(t * t) / (S::lit(2.0) * sigma_sq)
}

/// One draw from the meeting measure: the normalized pointwise minimum of
/// the one-step laws at the set's endpoints, sampled by rejection from
/// their equal-weight mixture. Per attempt: one endpoint uniform, one
/// normal, one acceptance uniform.
fn sample_meeting_measure<S: SampleScalar, R: Rng + ?Sized>(d: S, rng: &mut R) -> Result<S> {
    let half_d = d / S::lit(2.0);
    let sigma = S::lit(0.75).sqrt();
    for _ in 0..REJECTION_ATTEMPT_CAP {
        let center = if S::sample_unit_uniform(rng) < S::lit(0.5) { half_d } else { -half_d };
        let y = center + sigma * S::sample_standard_normal(rng);
        let lo = log_kernel_density_unnorm(-d, y);
        let hi = log_kernel_density_unnorm(d, y);
        // min(a, b) / (a + b) in log space; the normal prefactors cancel.
        let (small, large) = if lo < hi { (lo, hi) } else { (hi, lo) };
        let accept = S::one() / (S::one() + (large - small).exp());
        if S::sample_unit_uniform(rng) < accept {
            return Ok(y);
        }
    }
    Err(Error::Numerical(format!(
        "meeting-measure sampler exhausted {REJECTION_ATTEMPT_CAP} attempts at d = {d}"
    )))
}

/// One draw from the residual kernel `(P - c nu) / (1 - c)` at `x`:
/// propose from the one-step law and reject with probability
/// `c nu(y) / p(x, y)`, which realizability keeps at or below one. Per
/// attempt: one normal, one acceptance uniform.
fn sample_residual<S: SampleScalar, R: Rng + ?Sized>(
    x: S,
    spec: &SmallSetSpec<S>,
    capacity: S,
    rng: &mut R,
) -> Result<S> {
    for _ in 0..REJECTION_ATTEMPT_CAP {
        let y = ar1_step(x, rng);
        // Unnormalized meeting density at y is the smaller endpoint
        // density, the one whose center lies across the origin from y.
        let log_min = log_kernel_density_unnorm(d_signed(spec.d, y), y);
        let log_ratio = log_min - log_kernel_density_unnorm(x, y);
        let reject = spec.c / capacity * log_ratio.exp();
        if S::sample_unit_uniform(rng) >= reject {
            return Ok(y);
        }
    }
    Err(Error::Numerical(format!(
        "residual sampler exhausted {REJECTION_ATTEMPT_CAP} attempts at x = {x}, d = {}; \
         the diagonal mass leaves almost no residual",
        spec.d
    )))
}

/// Endpoint whose one-step density is smallest at `y`: the one across the
/// origin.
fn d_signed<S: Scalar>(d: S, y: S) -> S {
    if y >= S::zero() {
        -d
    } else {
        d
    }
}

/// Advance the coupled pair one step. A coalesced pair takes one common
/// step. A pair inside the small set meets with probability exactly `c`
/// (one uniform, then a meeting-measure draw) and otherwise moves by
/// per-coordinate residual draws, first coordinate first. Any other pair
/// advances by the off-set policy. Every branch leaves each coordinate's
/// marginal law equal to the one-step kernel.
pub fn coupled_step<S: SampleScalar, R: Rng + ?Sized>(
    state: &BivariateState<S>,
    small_set: &SmallSetSpec<S>,
    moves: OffSmallSetMoves,
    rng: &mut R,
) -> Result<BivariateState<S>> {
    state.validate()?;
    if state.coalesced {
        let z = ar1_step(state.x, rng);
        return Ok(BivariateState { x: z, x_prime: z, coalesced: true });
    }
    if small_set.contains(state.x) && small_set.contains(state.x_prime) {
        if S::sample_unit_uniform(rng) < small_set.c {
            let z = sample_meeting_measure(small_set.d, rng)?;
            return Ok(BivariateState { x: z, x_prime: z, coalesced: true });
        }
        let capacity = small_set.overlap_capacity();
        let x = sample_residual(state.x, small_set, capacity, rng)?;
        let x_prime = sample_residual(state.x_prime, small_set, capacity, rng)?;
        return Ok(BivariateState { x, x_prime, coalesced: false });
    }
    let (x, x_prime) = match moves {
        OffSmallSetMoves::Independent => {
            let x = ar1_step(state.x, rng);
            let x_prime = ar1_step(state.x_prime, rng);
            (x, x_prime)
        }
        OffSmallSetMoves::Synchronous => {
            let noise = S::sample_standard_normal(rng);
            let sigma = S::lit(0.75).sqrt();
            (state.x / S::lit(2.0) + sigma * noise, state.x_prime / S::lit(2.0) + sigma * noise)
        }
    };
    Ok(BivariateState { x, x_prime, coalesced: false })
}

/// Monte-Carlo estimate of the truncated weak-dependence sum together
/// with the bound comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct WeakDependenceReport<S> {
    /// Estimate of `sum_{k=0}^{horizon} E[d_V(X_k, X_k')]`.
    pub sum_estimate: S,
    pub se: S,
    /// Prefactor the estimate is compared against.
    #[serde(rename = "K")]
    pub k_bound: S,
    /// `K * d_V(x, x')`.
    pub bound_rhs: S,
    /// True when `sum_estimate - 3 se <= bound_rhs`.
    pub pass: bool,
    /// Set when at least 0.1% of replicates had not met by the horizon,
    /// so the truncated sum may understate the full one.
    pub truncation_warning: bool,
    pub uncoalesced_fraction: S,
    /// `d_V` of the starting pair.
    pub initial_dv: S,
    /// `sum_estimate / d_V(x, x')`: an empirical lower bound on the
    /// constant the certificate majorizes, 0 for a merged start.
    pub slackness: S,
    /// `E[d_V(X_k, X_k')]` for k = 0..=horizon.
    pub per_step_mean: Vec<S>,
    pub horizon: usize,
    pub reps: usize,
}

/// Estimate `sum_{k=0}^{horizon} E[d_V(X_k, X_k')]` from `reps` coupled
/// trajectories started at `(x, x_prime)` and compare it against
/// `k_bound * d_V(x, x')`. A bitwise-equal start is flagged as merged, so
/// its sum is exactly zero.
///
/// Replicates run on disjoint substreams; partial results are combined in
/// fixed chunk order, so the outcome is independent of thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn estimate_weak_dependence_sum<S: SampleScalar>(
    x: S,
    x_prime: S,
    horizon: usize,
    reps: usize,
    small_set: &SmallSetSpec<S>,
    v: &LyapunovFunction<S>,
    k_bound: S,
    moves: OffSmallSetMoves,
    stream: &RngStream,
) -> Result<WeakDependenceReport<S>> {
    small_set.validate()?;
    if !(x.is_finite() && x_prime.is_finite()) {
        return Err(Error::Precondition(format!(
            "starting pair must be finite, got ({x}, {x_prime})"
        )));
    }
    if horizon == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    if reps < 2 {
        return Err(Error::Precondition("at least two replicates are required for a standard error".into()));
    }
    if !(k_bound > S::zero() && k_bound.is_finite()) {
        return Err(Error::Precondition(format!(
            "prefactor must be positive and finite, got {k_bound}"
        )));
    }

    struct Partial<S> {
        sums: Vec<S>,
        per_step: Vec<S>,
        uncoalesced: usize,
    }

    let chunk_starts: Vec<usize> = (0..reps).step_by(CHUNK).collect();
    let partials: Result<Vec<Partial<S>>> = chunk_starts
        .into_par_iter()
        .map(|start| {
            let end = (start + CHUNK).min(reps);
            let mut partial = Partial {
                sums: Vec::with_capacity(end - start),
                per_step: vec![S::zero(); horizon + 1],
                uncoalesced: 0,
            };
            for rep in start..end {
                let mut rng = stream.substream(rep as u64).rng();
                let mut state = BivariateState { x, x_prime, coalesced: x == x_prime };
                let mut sum = d_v_metric(state.x, state.x_prime, v);
                partial.per_step[0] += sum;
                for step in partial.per_step.iter_mut().skip(1) {
                    state = coupled_step(&state, small_set, moves, &mut rng)?;
                    let dv = d_v_metric(state.x, state.x_prime, v);
                    sum += dv;
                    *step += dv;
                }
                if !state.coalesced {
                    partial.uncoalesced += 1;
                }
                partial.sums.push(sum);
            }
            Ok(partial)
        })
        .collect();
    let partials = partials?;

    let mut sums = Vec::with_capacity(reps);
    let mut per_step = vec![S::zero(); horizon + 1];
    let mut uncoalesced = 0usize;
    for partial in partials {
        sums.extend_from_slice(&partial.sums);
        for (acc, term) in per_step.iter_mut().zip(&partial.per_step) {
            *acc += *term;
        }
        uncoalesced += partial.uncoalesced;
    }
    let reps_s = S::from_usize(reps).expect("count fits scalar");
    for step in per_step.iter_mut() {
        *step /= reps_s;
    }

    let sum_estimate = sample_mean(&sums)?;
    let se = mean_se(&sums)?;
    let initial_dv = d_v_metric(x, x_prime, v);
    let bound_rhs = k_bound * initial_dv;
    let uncoalesced_fraction = S::from_usize(uncoalesced).expect("count fits scalar") / reps_s;
    let slackness = if initial_dv > S::zero() { sum_estimate / initial_dv } else { S::zero() };
    Ok(WeakDependenceReport {
        sum_estimate,
        se,
        k_bound,
        bound_rhs,
        pass: sum_estimate - S::lit(3.0) * se <= bound_rhs,
        truncation_warning: uncoalesced_fraction >= S::lit(1e-3),
        uncoalesced_fraction,
        initial_dv,
        slackness,
        per_step_mean: per_step,
        horizon,
        reps,
    })
}
