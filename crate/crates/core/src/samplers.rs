//! Chain simulators: random-walk Metropolis, its regenerative variant with an
//! explicit atom, exact rejection sampling, and a linear autoregressive
//! reference chain.
//!
//! Every simulator records the visited states together with the configured
//! Lyapunov weights, and reports its work honestly: `total_inner_steps`
//! counts algorithm iterations (not just recorded states), and the
//! regenerative sampler tracks where each excursion out of the atom begins so
//! that downstream consumers can treat excursions as exchangeable blocks.
//!
//! Work accounting for the regenerative sampler: every move-branch iteration
//! and every failed atom re-entry attempt costs one inner step. A successful
//! re-entry is charged only for the initialization episode; later entries
//! supersede a diverted move attempt that was already charged, so their
//! successful draw is free. Under this convention
//! `total_inner_steps = states + failed re-entry attempts`.

use crate::error::{Error, Result};
use crate::models::{LyapunovFunction, SymmetricProposal, UnnormalizedTarget};
use crate::rng::RngStream;
use crate::scalar::{SampleScalar, Scalar};
use crate::special::linspace;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Abort threshold for consecutive failed atom re-entry attempts (and for
/// consecutive rejection-sampler misses): beyond this the acceptance
/// probability is numerically zero and the run cannot make progress.
pub const STALL_LIMIT: u64 = 10_000_000;

/// The chain families the driver knows how to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Rwm,
    Regenerative,
    Rejection,
    Ar1,
}

impl std::fmt::Display for ChainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ChainKind::Rwm => "rwm",
            ChainKind::Regenerative => "regenerative",
            ChainKind::Rejection => "rejection",
            ChainKind::Ar1 => "ar1",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for ChainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rwm" => Ok(ChainKind::Rwm),
            "regen" | "regenerative" => Ok(ChainKind::Regenerative),
            "reject" | "rejection" => Ok(ChainKind::Rejection),
            "ar1" => Ok(ChainKind::Ar1),
            other => Err(Error::Config(format!(
                "unknown chain kind {other:?}; expected rwm, regen, reject, or ar1"
            ))),
        }
    }
}

/// How long to run a simulator: either until a number of states has been
/// recorded, or until a number of inner steps has been spent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    States(usize),
    InnerSteps(u64),
}

/// Starting point of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub enum InitialState<S> {
    Fixed(S),
    /// Draw the start from the chain's stationary law. Only the
    /// autoregressive family has one in closed form.
    Stationary,
}

/// A recorded run: visited states, their Lyapunov weights, and the work and
/// regeneration bookkeeping needed by the concentration machinery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct Trajectory<S> {
    pub kind: ChainKind,
    pub states: Vec<S>,
    /// `V(x)` per recorded state.
    pub v_values: Vec<S>,
    /// `V(x)^2` per recorded state.
    pub v_sq_values: Vec<S>,
    pub total_inner_steps: u64,
    /// Number of atom episodes, the initialization episode included.
    pub regeneration_count: u64,
    /// Indices into `states` where an excursion out of the atom begins.
    pub regeneration_starts: Vec<usize>,
    /// Proposals rejected because a density evaluation was not finite.
    pub nonfinite_rejections: u64,
}

impl<S: Scalar> Trajectory<S> {
    fn new(kind: ChainKind) -> Self {
        Trajectory {
            kind,
            states: Vec::new(),
            v_values: Vec::new(),
            v_sq_values: Vec::new(),
            total_inner_steps: 0,
            regeneration_count: 0,
            regeneration_starts: Vec::new(),
            nonfinite_rejections: 0,
        }
    }

    fn record(&mut self, x: S, v: &LyapunovFunction<S>) {
        self.states.push(x);
        self.v_values.push(v.eval(x));
        self.v_sq_values.push(v.eval_sq(x));
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Recorded states per inner step; `None` before any work was done.
    pub fn accepted_fraction(&self) -> Option<S> {
        if self.total_inner_steps == 0 {
            return None;
        }
        Some(
            S::from_usize(self.states.len()).expect("state count fits the scalar")
                / S::from_u64(self.total_inner_steps).expect("step count fits the scalar"),
        )
    }
}

fn budget_reached<S>(budget: Budget, traj: &Trajectory<S>) -> bool {
    match budget {
        Budget::States(n) => traj.states.len() >= n,
        Budget::InnerSteps(b) => traj.total_inner_steps >= b,
    }
}

/// Outcome of one Metropolis accept/reject decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum RwmOutcome<S> {
    Accepted(S),
    /// The proposed point lost the acceptance draw (or has zero density).
    RejectedRatio,
    /// The proposed point could not be evaluated; counted separately so a
    /// misconfigured model surfaces in the run report.
    RejectedNonFinite,
}

/// One Metropolis decision with the randomness passed in explicitly:
/// accept `y = x + z` when `U <= min(1, h(y)/h(x))`, in log space.
///
/// Requires `log h(x)` finite; accepted states always satisfy this, so the
/// invariant is maintained inductively from a checked start.
pub(crate) fn rwm_step_scripted<S: Scalar>(
    target: &UnnormalizedTarget<S>,
    x: S,
    z: S,
    u: S,
) -> RwmOutcome<S> {
    let y = x + z;
    let lh_y = target.log_h(y);
    if !y.is_finite() || lh_y.is_nan() || lh_y == S::infinity() {
        return RwmOutcome::RejectedNonFinite;
    }
    if lh_y == S::neg_infinity() {
        return RwmOutcome::RejectedRatio;
    }
    let delta = lh_y - target.log_h(x);
    if u.ln() <= delta.min(S::zero()) {
        RwmOutcome::Accepted(y)
    } else {
        RwmOutcome::RejectedRatio
    }
}

/// One random-walk Metropolis transition: draws `Z` from the proposal, then
/// the acceptance uniform, and returns the next state (the current one when
/// the proposal is rejected).
pub fn rwm_step<S: SampleScalar, R: Rng + ?Sized>(
    x: S,
    target: &UnnormalizedTarget<S>,
    proposal: &SymmetricProposal<S>,
    rng: &mut R,
) -> S {
    let z = proposal.sample(rng);
    let u = S::sample_unit_uniform(rng);
    match rwm_step_scripted(target, x, z, u) {
        RwmOutcome::Accepted(y) => y,
        RwmOutcome::RejectedRatio | RwmOutcome::RejectedNonFinite => x,
    }
}

/// Outcome of one atom re-entry attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum AtomOutcome<S> {
    /// The chain leaves the atom at this state.
    Exit(S),
    Stay,
    /// The candidate could not be evaluated; treated as a failed attempt.
    NonFinite,
}

/// One attempt to leave the atom: draw order is the uniform first, then the
/// candidate. The chain exits at `Z` when `U' < h(Z)/q(Z)` (no cap needed:
/// a uniform below one accepts automatically once the ratio exceeds one).
pub(crate) fn regen_atom_scripted<S: Scalar>(
    target: &UnnormalizedTarget<S>,
    proposal: &SymmetricProposal<S>,
    u_prime: S,
    z: S,
) -> AtomOutcome<S> {
    let lh = target.log_h(z);
    if !z.is_finite() || lh.is_nan() || lh == S::infinity() {
        return AtomOutcome::NonFinite;
    }
    // lh may be -inf (a candidate outside the support): the comparison below
    // is then false for every uniform, including zero.
    let delta = lh - proposal.log_q(z);
    if u_prime.ln() < delta {
        AtomOutcome::Exit(z)
    } else {
        AtomOutcome::Stay
    }
}

/// Outcome of one iteration outside the atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum MoveOutcome<S> {
    /// The Metropolis result is the next recorded state.
    Recorded { state: S, nonfinite: bool },
    /// The Metropolis result was discarded and the chain entered the atom.
    EnteredAtom { nonfinite: bool },
}

/// One iteration outside the atom: a Metropolis update with `(U, Z)`, then
/// an atom-entry check with `U'`. The chain stays out when
/// `U' > q(Y)/h(Y)`; the capped ratio `min(1, q/h)` gives the same decision
/// because the uniform never reaches one.
pub(crate) fn regen_move_scripted<S: Scalar>(
    target: &UnnormalizedTarget<S>,
    proposal: &SymmetricProposal<S>,
    x: S,
    u: S,
    u_prime: S,
    z: S,
) -> MoveOutcome<S> {
    let (y, nonfinite) = match rwm_step_scripted(target, x, z, u) {
        RwmOutcome::Accepted(y) => (y, false),
        RwmOutcome::RejectedRatio => (x, false),
        RwmOutcome::RejectedNonFinite => (x, true),
    };
    let entry = (proposal.log_q(y) - target.log_h(y)).min(S::zero());
    if u_prime.ln() <= entry {
        MoveOutcome::EnteredAtom { nonfinite }
    } else {
        MoveOutcome::Recorded { state: y, nonfinite }
    }
}

fn run_regen<S: SampleScalar, R: Rng + ?Sized>(
    target: &UnnormalizedTarget<S>,
    proposal: &SymmetricProposal<S>,
    v: &LyapunovFunction<S>,
    budget: Budget,
    rng: &mut R,
) -> Result<Trajectory<S>> {
    let mut traj = Trajectory::new(ChainKind::Regenerative);
    let mut in_atom = true;
    // Never read before the first atom exit assigns it.
    let mut x = S::nan();
    let mut consecutive_atom_failures: u64 = 0;
    let mut initial_exit_pending = true;
    while !budget_reached(budget, &traj) {
        if traj.regeneration_count == 0 {
            // The chain initializes inside the atom; that episode counts.
            traj.regeneration_count = 1;
        }
        if in_atom {
            let u_prime = S::sample_unit_uniform(rng);
            let z = proposal.sample(rng);
            match regen_atom_scripted(target, proposal, u_prime, z) {
                AtomOutcome::Exit(state) => {
                    if initial_exit_pending {
                        traj.total_inner_steps += 1;
                        initial_exit_pending = false;
                    }
                    consecutive_atom_failures = 0;
                    in_atom = false;
                    x = state;
                    traj.regeneration_starts.push(traj.states.len());
                    traj.record(x, v);
                }
                outcome @ (AtomOutcome::Stay | AtomOutcome::NonFinite) => {
                    traj.total_inner_steps += 1;
                    if outcome == AtomOutcome::NonFinite {
                        traj.nonfinite_rejections += 1;
                    }
                    consecutive_atom_failures += 1;
                    if consecutive_atom_failures >= STALL_LIMIT {
                        return Err(Error::Stall(format!(
                            "atom re-entry failed {STALL_LIMIT} consecutive times; \
                             the proposal mass barely overlaps the target"
                        )));
                    }
                }
            }
        } else {
            let u = S::sample_unit_uniform(rng);
            let u_prime = S::sample_unit_uniform(rng);
            let z = proposal.sample(rng);
            traj.total_inner_steps += 1;
            match regen_move_scripted(target, proposal, x, u, u_prime, z) {
                MoveOutcome::Recorded { state, nonfinite } => {
                    x = state;
                    traj.record(x, v);
                    if nonfinite {
                        traj.nonfinite_rejections += 1;
                    }
                }
                MoveOutcome::EnteredAtom { nonfinite } => {
                    in_atom = true;
                    traj.regeneration_count += 1;
                    if nonfinite {
                        traj.nonfinite_rejections += 1;
                    }
                }
            }
        }
    }
    Ok(traj)
}

/// Checks `M q >= h` on a wide grid before a rejection run starts, so an
/// undersized envelope fails fast instead of producing a biased sample.
fn verify_envelope<S: Scalar>(
    target: &UnnormalizedTarget<S>,
    proposal: &SymmetricProposal<S>,
    envelope_m: S,
) -> Result<()> {
    if !(envelope_m > S::zero()) || !envelope_m.is_finite() {
        return Err(Error::Config(format!(
            "envelope constant must be positive and finite, got {envelope_m}"
        )));
    }
    let w = proposal.envelope_halfwidth(S::lit(1e-13)).max(S::lit(8.0));
    let ln_m = envelope_m.ln();
    for x in linspace(-w, w, 513) {
        let excess = target.log_h(x) - ln_m - proposal.log_q(x);
        if excess > S::lit(1e-9) {
            return Err(Error::Envelope(format!(
                "envelope misses the target at x = {x}: log h - log(M q) = {excess}"
            )));
        }
    }
    Ok(())
}

fn run_rejection<S: SampleScalar, R: Rng + ?Sized>(
    target: &UnnormalizedTarget<S>,
    proposal: &SymmetricProposal<S>,
    envelope_m: S,
    v: &LyapunovFunction<S>,
    budget: Budget,
    rng: &mut R,
) -> Result<Trajectory<S>> {
    verify_envelope(target, proposal, envelope_m)?;
    let ln_m = envelope_m.ln();
    let mut traj = Trajectory::new(ChainKind::Rejection);
    let mut consecutive_misses: u64 = 0;
    while !budget_reached(budget, &traj) {
        traj.total_inner_steps += 1;
        let y = proposal.sample(rng);
        let u = S::sample_unit_uniform(rng);
        let delta = target.log_h(y) - ln_m - proposal.log_q(y);
        if !y.is_finite() || delta.is_nan() || delta == S::infinity() {
            traj.nonfinite_rejections += 1;
            consecutive_misses += 1;
        } else if delta > S::lit(1e-9) {
            // The grid check can miss a violation between its nodes; the run
            // itself must still refuse to sample from a broken envelope.
            return Err(Error::Envelope(format!(
                "envelope misses the target at x = {y}: log h - log(M q) = {delta}"
            )));
        } else if delta > S::neg_infinity() && u.ln() <= delta.min(S::zero()) {
            traj.record(y, v);
            consecutive_misses = 0;
        } else {
            consecutive_misses += 1;
        }
        if consecutive_misses >= STALL_LIMIT {
            return Err(Error::Stall(format!(
                "rejection sampler missed {STALL_LIMIT} consecutive proposals; \
                 the envelope constant is far too large"
            )));
        }
    }
    Ok(traj)
}

/// The tightest valid envelope constant `sup h/q`, from the reciprocal of
/// the density-ratio floor. Requires the ratio to peak strictly inside the
/// search window.
pub fn optimal_envelope<S: Scalar>(
    target: &UnnormalizedTarget<S>,
    proposal: &SymmetricProposal<S>,
) -> Result<S> {
    let floor = crate::constants::density_ratio_floor(target, proposal)?;
    Ok(S::one() / floor.value)
}

/// One autoregressive transition `x' = x/2 + sqrt(3/4) n` with the noise
/// passed in explicitly.
pub fn ar1_step_scripted<S: Scalar>(x: S, noise: S) -> S {
    S::lit(0.5) * x + S::lit(0.75).sqrt() * noise
}

/// One autoregressive transition with standard normal noise. The stationary
/// law is standard normal.
pub fn ar1_step<S: SampleScalar, R: Rng + ?Sized>(x: S, rng: &mut R) -> S {
    ar1_step_scripted(x, S::sample_standard_normal(rng))
}

/// One-step mean of `V(x) = 1 + x^2` under the autoregressive kernel:
/// `E[V(X') | x] = 1.75 + x^2/4`. Tight drift with rate 1/4 and offset 3/2.
pub fn ar1_pv<S: Scalar>(x: S) -> S {
    S::lit(1.75) + S::lit(0.25) * x * x
}

/// One-step mean of `V(x)^2` for `V(x) = 1 + x^2`:
/// `E[V(X')^2 | x] = 4.1875 + 1.625 x^2 + x^4/16`.
pub fn ar1_pv_sq<S: Scalar>(x: S) -> S {
    let xx = x * x;
    S::lit(4.1875) + S::lit(1.625) * xx + S::lit(0.0625) * xx * xx
}

fn run_rwm<S: SampleScalar, R: Rng + ?Sized>(
    target: &UnnormalizedTarget<S>,
    proposal: &SymmetricProposal<S>,
    v: &LyapunovFunction<S>,
    x0: S,
    budget: Budget,
    rng: &mut R,
) -> Result<Trajectory<S>> {
    let lh0 = target.log_h(x0);
    if !x0.is_finite() || !lh0.is_finite() {
        return Err(Error::Precondition(format!(
            "rwm must start where the target density is positive: log h({x0}) = {lh0}"
        )));
    }
    let n = match budget {
        Budget::States(n) => n,
        // One inner step per recorded state for this family.
        Budget::InnerSteps(b) => b as usize,
    };
    let mut traj = Trajectory::new(ChainKind::Rwm);
    let mut x = x0;
    for _ in 0..n {
        let z = proposal.sample(rng);
        let u = S::sample_unit_uniform(rng);
        match rwm_step_scripted(target, x, z, u) {
            RwmOutcome::Accepted(y) => x = y,
            RwmOutcome::RejectedRatio => {}
            RwmOutcome::RejectedNonFinite => traj.nonfinite_rejections += 1,
        }
        traj.total_inner_steps += 1;
        traj.record(x, v);
    }
    Ok(traj)
}

fn run_ar1<S: SampleScalar, R: Rng + ?Sized>(
    v: &LyapunovFunction<S>,
    initial: InitialState<S>,
    budget: Budget,
    rng: &mut R,
) -> Result<Trajectory<S>> {
    let mut x = match initial {
        InitialState::Fixed(x0) if x0.is_finite() => x0,
        InitialState::Fixed(x0) => {
            return Err(Error::Precondition(format!(
                "ar1 initial state must be finite, got {x0}"
            )));
        }
        InitialState::Stationary => S::sample_standard_normal(rng),
    };
    let n = match budget {
        Budget::States(n) => n,
        Budget::InnerSteps(b) => b as usize,
    };
    let mut traj = Trajectory::new(ChainKind::Ar1);
    for _ in 0..n {
        x = ar1_step(x, rng);
        traj.total_inner_steps += 1;
        traj.record(x, v);
    }
    Ok(traj)
}

/// Everything `run_chain` needs to simulate one chain. Construct through the
/// per-kind helpers; unused fields are ignored by the other kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct ChainSpec<S> {
    pub kind: ChainKind,
    pub target: Option<UnnormalizedTarget<S>>,
    pub proposal: Option<SymmetricProposal<S>>,
    /// Rejection sampling envelope constant `M` with `M q >= h`.
    pub envelope_m: Option<S>,
    pub v: LyapunovFunction<S>,
    /// Starting point. The regenerative chain ignores it (it always starts
    /// inside its atom); `Stationary` is only available for `Ar1`.
    pub initial: InitialState<S>,
}

impl<S: Scalar> ChainSpec<S> {
    pub fn rwm(
        target: UnnormalizedTarget<S>,
        proposal: SymmetricProposal<S>,
        v: LyapunovFunction<S>,
        initial: S,
    ) -> Self {
        ChainSpec {
            kind: ChainKind::Rwm,
            target: Some(target),
            proposal: Some(proposal),
            envelope_m: None,
            v,
            initial: InitialState::Fixed(initial),
        }
    }

    pub fn regenerative(
        target: UnnormalizedTarget<S>,
        proposal: SymmetricProposal<S>,
        v: LyapunovFunction<S>,
    ) -> Self {
        ChainSpec {
            kind: ChainKind::Regenerative,
            target: Some(target),
            proposal: Some(proposal),
            envelope_m: None,
            v,
            initial: InitialState::Fixed(S::zero()),
        }
    }

    pub fn rejection(
        target: UnnormalizedTarget<S>,
        proposal: SymmetricProposal<S>,
        envelope_m: S,
        v: LyapunovFunction<S>,
    ) -> Self {
        ChainSpec {
            kind: ChainKind::Rejection,
            target: Some(target),
            proposal: Some(proposal),
            envelope_m: Some(envelope_m),
            v,
            initial: InitialState::Fixed(S::zero()),
        }
    }

    pub fn ar1(v: LyapunovFunction<S>, initial: InitialState<S>) -> Self {
        ChainSpec {
            kind: ChainKind::Ar1,
            target: None,
            proposal: None,
            envelope_m: None,
            v,
            initial,
        }
    }

    fn target(&self) -> Result<&UnnormalizedTarget<S>> {
        self.target.as_ref().ok_or_else(|| {
            Error::Config(format!("{} chain needs `target`", self.kind))
        })
    }

    fn proposal(&self) -> Result<&SymmetricProposal<S>> {
        self.proposal.as_ref().ok_or_else(|| {
            Error::Config(format!("{} chain needs `proposal`", self.kind))
        })
    }
}

/// Simulates one chain to the given budget, drawing all randomness from the
/// stream. Runs with the same spec, budget, and stream are bit-identical.
pub fn run_chain<S: SampleScalar>(
    spec: &ChainSpec<S>,
    budget: Budget,
    stream: &RngStream,
) -> Result<Trajectory<S>> {
    let mut rng = stream.rng();
    match spec.kind {
        ChainKind::Rwm => {
            let x0 = match spec.initial {
                InitialState::Fixed(x0) => x0,
                InitialState::Stationary => {
                    return Err(Error::Config(
                        "rwm has no closed-form stationary initializer; use a fixed start".into(),
                    ));
                }
            };
            run_rwm(spec.target()?, spec.proposal()?, &spec.v, x0, budget, &mut rng)
        }
        ChainKind::Regenerative => {
            run_regen(spec.target()?, spec.proposal()?, &spec.v, budget, &mut rng)
        }
        ChainKind::Rejection => {
            let m = spec.envelope_m.ok_or_else(|| {
                Error::Config("rejection chain needs `envelope_m`".into())
            })?;
            run_rejection(spec.target()?, spec.proposal()?, m, &spec.v, budget, &mut rng)
        }
        ChainKind::Ar1 => run_ar1(&spec.v, spec.initial, budget, &mut rng),
    }
}

/// Runs the regenerative Metropolis chain for `n` recorded states.
pub fn regen_metropolis_run<S: SampleScalar>(
    n: usize,
    target: &UnnormalizedTarget<S>,
    proposal: &SymmetricProposal<S>,
    v: &LyapunovFunction<S>,
    stream: &RngStream,
) -> Result<Trajectory<S>> {
    let mut rng = stream.rng();
    run_regen(target, proposal, v, Budget::States(n), &mut rng)
}

/// Draws `n` independent exact target samples by rejection from the
/// proposal with envelope constant `envelope_m`.
pub fn rejection_sample<S: SampleScalar>(
    n: usize,
    target: &UnnormalizedTarget<S>,
    proposal: &SymmetricProposal<S>,
    envelope_m: S,
    v: &LyapunovFunction<S>,
    stream: &RngStream,
) -> Result<Trajectory<S>> {
    let mut rng = stream.rng();
    run_rejection(target, proposal, envelope_m, v, Budget::States(n), &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{batch_means_se, mean_se, sample_mean, sample_variance, two_sample_ks};
    use crate::models::TargetDensity;
    use crate::test_support::simpson;
    use approx::assert_relative_eq;

    /// Offset-Gaussian target `h(x) = exp(-(x-1)^2)` with a standard normal
    /// proposal: mean 1, variance 1/2, heavily used across the crate.
    fn offset_model() -> (
        UnnormalizedTarget<f64>,
        SymmetricProposal<f64>,
        LyapunovFunction<f64>,
    ) {
        (
            UnnormalizedTarget::new(TargetDensity::SquaredExp {
                center: 1.0,
                scale: 1.0,
            }),
            SymmetricProposal::standard_normal(),
            LyapunovFunction::exp_abs(0.49).unwrap(),
        )
    }

    /// Target identical to the proposal: every move attempt enters the atom
    /// and every re-entry attempt succeeds, making each branch deterministic.
    fn identical_model() -> (
        UnnormalizedTarget<f64>,
        SymmetricProposal<f64>,
        LyapunovFunction<f64>,
    ) {
        (
            UnnormalizedTarget::new(TargetDensity::NormalizedGaussian { mean: 0.0, sd: 1.0 }),
            SymmetricProposal::standard_normal(),
            LyapunovFunction::one_plus_square(),
        )
    }

    #[test]
    fn rwm_scripted_steps_match_hand_ratios() {
        // h(x) = exp(-x^2/2): from 0 toward 1 the ratio is exp(-1/2) = 0.6065.
        let target = UnnormalizedTarget::new(TargetDensity::SquaredExp {
            center: 0.0,
            scale: std::f64::consts::SQRT_2,
        });
        assert_eq!(
            rwm_step_scripted(&target, 0.0, 1.0, 0.5),
            RwmOutcome::Accepted(1.0)
        );
        assert_eq!(rwm_step_scripted(&target, 0.0, 1.0, 0.7), RwmOutcome::RejectedRatio);
        // Uphill moves accept for any uniform, the supremum included.
        assert_eq!(
            rwm_step_scripted(&target, 1.0, -1.0, 1.0),
            RwmOutcome::Accepted(0.0)
        );
    }

    #[test]
    fn rwm_scripted_counts_unevaluable_proposals() {
        let target = UnnormalizedTarget::new(TargetDensity::Cauchy);
        assert_eq!(
            rwm_step_scripted(&target, 0.0, f64::INFINITY, 0.5),
            RwmOutcome::RejectedNonFinite
        );
        assert_eq!(
            rwm_step_scripted(&target, 0.0, f64::NAN, 0.5),
            RwmOutcome::RejectedNonFinite
        );
    }

    #[test]
    fn rwm_step_is_deterministic_and_draws_proposal_first() {
        let (target, proposal, _) = offset_model();
        let stream = RngStream::new(11);
        let a = rwm_step(0.3, &target, &proposal, &mut stream.rng());
        let b = rwm_step(0.3, &target, &proposal, &mut stream.rng());
        assert_eq!(a, b);
        // Replaying the documented draw order reproduces the step exactly.
        let mut rng = stream.rng();
        let z = proposal.sample(&mut rng);
        let u = f64::sample_unit_uniform(&mut rng);
        let expected = match rwm_step_scripted(&target, 0.3, z, u) {
            RwmOutcome::Accepted(y) => y,
            _ => 0.3,
        };
        assert_eq!(a, expected);
    }

    #[test]
    fn regen_atom_exit_follows_the_density_ratio() {
        let (target, proposal, _) = offset_model();
        // At z = -2 the ratio h/q = exp(-9)/phi(-2) = 0.0022857: a uniform
        // above it stays, one below it exits.
        let ratio = (target.log_h(-2.0) - proposal.log_q(-2.0)).exp();
        assert_relative_eq!(ratio, 0.002_285_7, epsilon = 5e-7);
        assert_eq!(
            regen_atom_scripted(&target, &proposal, 0.1, -2.0),
            AtomOutcome::Stay
        );
        assert_eq!(
            regen_atom_scripted(&target, &proposal, 0.001, -2.0),
            AtomOutcome::Exit(-2.0)
        );
        // At z = 3 the ratio exceeds one, so any uniform exits.
        assert_eq!(
            regen_atom_scripted(&target, &proposal, 0.999, 3.0),
            AtomOutcome::Exit(3.0)
        );
    }

    #[test]
    fn regen_move_branch_records_or_reenters() {
        let (target, proposal, _) = offset_model();
        // From x = 1 propose z = 0.2 with u = 0.9: ratio h(1.2)/h(1) =
        // exp(-0.04) = 0.9608 > u, accepted. Entry ratio q(1.2)/h(1.2) =
        // 0.194186/0.960789 = 0.202111.
        let entry = (proposal.log_q(1.2) - target.log_h(1.2)).exp();
        assert_relative_eq!(entry, 0.202_110_7, epsilon = 1e-6);
        assert_eq!(
            regen_move_scripted(&target, &proposal, 1.0, 0.9, 0.5, 0.2),
            MoveOutcome::Recorded {
                state: 1.2,
                nonfinite: false
            }
        );
        assert_eq!(
            regen_move_scripted(&target, &proposal, 1.0, 0.9, 0.1, 0.2),
            MoveOutcome::EnteredAtom { nonfinite: false }
        );
        // A rejected Metropolis proposal leaves the state in place; the
        // entry check then applies to the old state.
        assert_eq!(
            regen_move_scripted(&target, &proposal, 1.0, 0.999, 0.9, 2.0),
            MoveOutcome::Recorded {
                state: 1.0,
                nonfinite: false
            }
        );
    }

    #[test]
    fn regen_engine_consumes_randomness_in_the_documented_order() {
        let (target, proposal, v) = offset_model();
        let stream = RngStream::new(77);
        let traj = regen_metropolis_run(60, &target, &proposal, &v, &stream).unwrap();
        // Replay through the scripted cores with the same stream.
        let mut rng = stream.rng();
        let mut states = Vec::new();
        let mut in_atom = true;
        let mut x = f64::NAN;
        while states.len() < 60 {
            if in_atom {
                let u_prime = f64::sample_unit_uniform(&mut rng);
                let z = proposal.sample(&mut rng);
                if let AtomOutcome::Exit(s) = regen_atom_scripted(&target, &proposal, u_prime, z) {
                    x = s;
                    in_atom = false;
                    states.push(x);
                }
            } else {
                let u = f64::sample_unit_uniform(&mut rng);
                let u_prime = f64::sample_unit_uniform(&mut rng);
                let z = proposal.sample(&mut rng);
                match regen_move_scripted(&target, &proposal, x, u, u_prime, z) {
                    MoveOutcome::Recorded { state, .. } => {
                        x = state;
                        states.push(x);
                    }
                    MoveOutcome::EnteredAtom { .. } => in_atom = true,
                }
            }
        }
        assert_eq!(traj.states, states);
    }

    #[test]
    fn regen_identical_densities_alternate_exit_and_reentry() {
        // h = q makes both branch decisions certain: every excursion has
        // length one and every inner step lands exactly on the budget.
        let (target, proposal, v) = identical_model();
        let stream = RngStream::new(5);
        let traj = regen_metropolis_run(200, &target, &proposal, &v, &stream).unwrap();
        assert_eq!(traj.len(), 200);
        assert_eq!(traj.total_inner_steps, 200);
        assert_eq!(traj.regeneration_count, 200);
        assert_eq!(
            traj.regeneration_starts,
            (0..200).collect::<Vec<usize>>()
        );
        assert_eq!(traj.nonfinite_rejections, 0);
        // States are exact proposal draws from the stationary law.
        let mean = sample_mean(&traj.states).unwrap();
        assert!(mean.abs() < 0.25, "mean = {mean}");
    }

    #[test]
    fn regen_accepted_fraction_matches_the_overlap_integrals() {
        // Exit probability integral min(h, q) = 0.63874 and entry
        // probability 0.36037 give a stationary recorded fraction
        // 1/(1 + 0.36037 * (1 - 0.63874)/0.63874) = 0.8307.
        let (target, proposal, v) = offset_model();
        let stream = RngStream::new(42);
        let traj = regen_metropolis_run(20_000, &target, &proposal, &v, &stream).unwrap();
        let fraction = traj.accepted_fraction().unwrap();
        assert!(
            (0.82..0.84).contains(&fraction),
            "accepted fraction = {fraction}"
        );
        let entry_rate = traj.regeneration_count as f64 / traj.len() as f64;
        assert!(
            (0.35..0.37).contains(&entry_rate),
            "entry rate = {entry_rate}"
        );
        // The work identity from the charging convention.
        assert!(traj.total_inner_steps >= traj.len() as u64);
    }

    #[test]
    fn regen_inner_step_budget_is_spent_exactly() {
        let (target, proposal, v) = offset_model();
        let spec = ChainSpec::regenerative(target, proposal, v);
        let traj = run_chain(&spec, Budget::InnerSteps(10_000), &RngStream::new(9).substream(3)).unwrap();
        assert_eq!(traj.total_inner_steps, 10_000);
        let fraction = traj.accepted_fraction().unwrap();
        assert!(
            (0.81..0.85).contains(&fraction),
            "accepted fraction = {fraction}"
        );
    }

    #[test]
    fn regen_chain_is_centered_on_the_target_mean() {
        let (target, proposal, v) = offset_model();
        let stream = RngStream::new(31);
        let traj = regen_metropolis_run(150_000, &target, &proposal, &v, &stream).unwrap();
        let mean = sample_mean(&traj.states).unwrap();
        let se = batch_means_se(&traj.states, 100).unwrap();
        assert!(
            (mean - 1.0).abs() <= 3.0 * se,
            "mean = {mean}, batch se = {se}"
        );
    }

    #[test]
    fn regen_marginal_matches_independent_rejection_draws() {
        let (target, proposal, v) = offset_model();
        let chain =
            regen_metropolis_run(100_000, &target, &proposal, &v, &RngStream::new(1234))
                .unwrap();
        // Thin to roughly independent draws: regenerations arrive every ~2.8
        // states, so a stride of 10 spans several of them.
        let thinned: Vec<f64> = chain.states.iter().copied().step_by(10).collect();
        let m = optimal_envelope(&target, &proposal).unwrap();
        assert_relative_eq!(m, (1.0_f64).exp() * (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-6);
        let exact =
            rejection_sample(10_000, &target, &proposal, m, &v, &RngStream::new(1234).substream(1)).unwrap();
        let report = two_sample_ks(&thinned, &exact.states).unwrap();
        assert!(
            report.p_value >= 0.001,
            "KS D = {}, p = {}",
            report.statistic,
            report.p_value
        );
    }

    #[test]
    fn regen_blocks_are_exchangeable() {
        let (target, proposal, v) = offset_model();
        let traj =
            regen_metropolis_run(100_000, &target, &proposal, &v, &RngStream::new(7)).unwrap();
        // Block means between consecutive regenerations, skipping the
        // initialization block, split by parity.
        let mut block_means = Vec::new();
        let starts = &traj.regeneration_starts;
        for w in 1..starts.len() {
            let lo = starts[w - 1];
            let hi = starts[w];
            block_means.push(sample_mean(&traj.states[lo..hi]).unwrap());
        }
        let odd: Vec<f64> = block_means.iter().copied().skip(1).step_by(2).collect();
        let even: Vec<f64> = block_means.iter().copied().step_by(2).collect();
        let gap = (sample_mean(&odd).unwrap() - sample_mean(&even).unwrap()).abs();
        let se = (mean_se(&odd).unwrap().powi(2) + mean_se(&even).unwrap().powi(2)).sqrt();
        assert!(gap <= 3.5 * se, "gap = {gap}, se = {se}");
    }

    #[test]
    fn regen_stall_limit_is_pinned_and_enforced() {
        assert_eq!(STALL_LIMIT, 10_000_000);
        // A target living far outside the proposal's reach never re-enters;
        // exercise the guard through a directly driven short loop.
        let target = UnnormalizedTarget::new(TargetDensity::SquaredExp {
            center: 1e200,
            scale: 1.0,
        });
        let proposal = SymmetricProposal::standard_normal();
        let mut rng = RngStream::new(3).rng();
        for _ in 0..1000 {
            let u = f64::sample_unit_uniform(&mut rng);
            let z = proposal.sample(&mut rng);
            assert_ne!(
                regen_atom_scripted(&target, &proposal, u, z),
                AtomOutcome::Exit(z)
            );
        }
    }

    #[test]
    fn rejection_identical_densities_accept_every_proposal() {
        let (target, proposal, v) = identical_model();
        let stream = RngStream::new(8);
        let traj = rejection_sample(500, &target, &proposal, 1.0, &v, &stream).unwrap();
        assert_eq!(traj.len(), 500);
        assert_eq!(traj.total_inner_steps, 500);
        assert_eq!(traj.regeneration_count, 0);
    }

    #[test]
    fn rejection_acceptance_rate_matches_the_envelope_ratio() {
        // With the tight envelope M = sup h/q, the acceptance rate is
        // integral(h)/M = sqrt(pi)/(e sqrt(2 pi)) = 0.26015.
        let (target, proposal, v) = offset_model();
        let m = optimal_envelope(&target, &proposal).unwrap();
        let spec = ChainSpec::rejection(target, proposal, m, v);
        let traj = run_chain(&spec, Budget::InnerSteps(50_000), &RngStream::new(21)).unwrap();
        let rate = traj.accepted_fraction().unwrap();
        assert!((0.25..0.27).contains(&rate), "acceptance rate = {rate}");
        let mean = sample_mean(&traj.states).unwrap();
        let se = mean_se(&traj.states).unwrap();
        assert!((mean - 1.0).abs() <= 3.5 * se, "mean = {mean}, se = {se}");
    }

    #[test]
    fn rejection_detects_an_undersized_envelope_on_the_grid() {
        let (target, proposal, v) = offset_model();
        // sup h/q = 6.81 but M = 2: the pre-run grid check must fire.
        let err = rejection_sample(10, &target, &proposal, 2.0, &v, &RngStream::new(1))
            .unwrap_err();
        assert!(matches!(err, Error::Envelope(_)), "got {err:?}");
    }

    #[test]
    fn rejection_detects_an_envelope_breach_between_grid_nodes() {
        // A spike narrower than the grid spacing slips past the pre-check;
        // the per-draw guard must still catch it once a proposal lands there.
        let proposal = SymmetricProposal::normal(10.0).unwrap();
        let w = proposal.envelope_halfwidth(1e-13_f64).max(8.0);
        let grid = linspace(-w, w, 513);
        let spacing = grid[1] - grid[0];
        let mid = (grid[255] + grid[256]) / 2.0;
        let target = UnnormalizedTarget::new(TargetDensity::SquaredExp {
            center: mid,
            scale: 0.01,
        });
        // The spike must vanish at the nearest grid nodes for the test to
        // exercise the runtime path.
        assert!(spacing / 2.0 > 0.2, "spacing = {spacing}");
        assert!(target.log_h(grid[255]) == f64::NEG_INFINITY || target.h(grid[255]) < 1e-200);
        let v = LyapunovFunction::one_plus_square();
        let err = rejection_sample(10, &target, &proposal, 1.0, &v, &RngStream::new(2))
            .unwrap_err();
        assert!(matches!(err, Error::Envelope(_)), "got {err:?}");
    }

    #[test]
    fn ar1_step_matches_the_closed_form() {
        assert_eq!(ar1_step_scripted(2.0, 1.0), 0.5 * 2.0 + 0.75_f64.sqrt());
        assert_relative_eq!(ar1_step_scripted(2.0, 1.0), 1.866_025_403_784_438_6, epsilon = 1e-15);
        assert_eq!(ar1_step_scripted(0.0, 0.0), 0.0);
    }

    #[test]
    fn ar1_step_moments_match_quadrature() {
        // Independent check of the one-step V moments by integrating over
        // the noise law directly.
        for &x in &[0.0, 1.0, 2.5] {
            let pv = simpson(
                |n: f64| {
                    let y = ar1_step_scripted(x, n);
                    (1.0 + y * y) * (-n * n / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
                },
                -10.0,
                10.0,
                4001,
            );
            assert_relative_eq!(ar1_pv(x), pv, max_relative = 1e-10);
            let pv_sq = simpson(
                |n: f64| {
                    let y = ar1_step_scripted(x, n);
                    (1.0 + y * y).powi(2) * (-n * n / 2.0).exp()
                        / (2.0 * std::f64::consts::PI).sqrt()
                },
                -10.0,
                10.0,
                4001,
            );
            assert_relative_eq!(ar1_pv_sq(x), pv_sq, max_relative = 1e-10);
        }
    }

    #[test]
    fn ar1_longrun_moments_match_the_stationary_law() {
        let spec = ChainSpec::<f64>::ar1(LyapunovFunction::one_plus_square(), InitialState::Stationary);
        let traj = run_chain(&spec, Budget::States(400_000), &RngStream::new(15)).unwrap();
        let mean = sample_mean(&traj.states).unwrap();
        let var = sample_variance(&traj.states).unwrap();
        assert!(mean.abs() < 0.01, "mean = {mean}");
        assert!((var - 1.0).abs() < 0.015, "var = {var}");
        // V values follow mechanically from the states.
        assert_eq!(traj.v_values[7], 1.0 + traj.states[7] * traj.states[7]);
    }

    #[test]
    fn rwm_equilibrium_moments_match_the_target() {
        // Long run on h(x) = exp(-(x-1)^2), stationary mean 1 and variance
        // 1/2; burn in, then compare with batch-means uncertainty.
        let (target, proposal, v) = offset_model();
        let spec = ChainSpec::rwm(target, proposal, v, 0.0);
        let traj = run_chain(&spec, Budget::States(500_000), &RngStream::new(99)).unwrap();
        let kept = &traj.states[100_000..];
        let mean = sample_mean(kept).unwrap();
        let mean_se = batch_means_se(kept, 100).unwrap();
        assert!(
            (mean - 1.0).abs() <= 3.0 * mean_se,
            "mean = {mean}, se = {mean_se}"
        );
        let sq_devs: Vec<f64> = kept.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = sample_mean(&sq_devs).unwrap();
        let var_se = batch_means_se(&sq_devs, 100).unwrap();
        assert!(
            (var - 0.5).abs() <= 3.0 * var_se,
            "var = {var}, se = {var_se}"
        );
    }

    #[test]
    fn run_chain_validates_kind_requirements() {
        let v = LyapunovFunction::one_plus_square();
        let no_target = ChainSpec::<f64> {
            kind: ChainKind::Rwm,
            target: None,
            proposal: Some(SymmetricProposal::standard_normal()),
            envelope_m: None,
            v,
            initial: InitialState::Fixed(0.0),
        };
        let err = run_chain(&no_target, Budget::States(1), &RngStream::new(0)).unwrap_err();
        assert!(err.to_string().contains("target"), "got {err}");

        let mut stationary_rwm = no_target.clone();
        stationary_rwm.target = Some(UnnormalizedTarget::new(TargetDensity::Cauchy));
        stationary_rwm.initial = InitialState::Stationary;
        let err =
            run_chain(&stationary_rwm, Budget::States(1), &RngStream::new(0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");

        let mut no_m = stationary_rwm.clone();
        no_m.kind = ChainKind::Rejection;
        no_m.initial = InitialState::Fixed(0.0);
        let err = run_chain(&no_m, Budget::States(1), &RngStream::new(0)).unwrap_err();
        assert!(err.to_string().contains("envelope_m"), "got {err}");

        // Starting rwm where the density vanishes is a precondition error.
        let (target, proposal, v) = offset_model();
        let dead_start = ChainSpec::rwm(target, proposal, v, 1e200);
        let err = run_chain(&dead_start, Budget::States(1), &RngStream::new(0)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "got {err:?}");
    }

    #[test]
    fn run_chain_budget_shapes_are_exact() {
        let (target, proposal, v) = offset_model();
        let rwm = ChainSpec::rwm(target, proposal, v, 0.0);
        let empty = run_chain(&rwm, Budget::States(0), &RngStream::new(4)).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.total_inner_steps, 0);
        assert_eq!(empty.regeneration_count, 0);
        assert!(empty.accepted_fraction().is_none());

        let run = run_chain(&rwm, Budget::States(1000), &RngStream::new(4)).unwrap();
        assert_eq!(run.len(), 1000);
        assert_eq!(run.total_inner_steps, 1000);
        assert_eq!(run.accepted_fraction(), Some(1.0));
        assert!(run.regeneration_starts.is_empty());
        assert_eq!(run.v_values.len(), 1000);
        assert_eq!(run.v_sq_values.len(), 1000);

        let by_steps = run_chain(&rwm, Budget::InnerSteps(500), &RngStream::new(4)).unwrap();
        assert_eq!(by_steps.len(), 500);

        let regen = ChainSpec::regenerative(target, proposal, v);
        let t = run_chain(&regen, Budget::States(0), &RngStream::new(4)).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.regeneration_count, 0);
    }

    #[test]
    fn trajectories_are_deterministic_per_stream() {
        let (target, proposal, v) = offset_model();
        let spec = ChainSpec::regenerative(target, proposal, v);
        let a = run_chain(&spec, Budget::States(2000), &RngStream::new(123).substream(4)).unwrap();
        let b = run_chain(&spec, Budget::States(2000), &RngStream::new(123).substream(4)).unwrap();
        assert_eq!(a, b);
        let c = run_chain(&spec, Budget::States(2000), &RngStream::new(123).substream(5)).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn trajectory_serde_roundtrip_is_bit_exact() {
        let (target, proposal, v) = offset_model();
        let spec = ChainSpec::regenerative(target, proposal, v);
        let traj = run_chain(&spec, Budget::States(50), &RngStream::new(77).substream(1)).unwrap();
        let json = serde_json::to_string(&traj).unwrap();
        let back: Trajectory<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(traj, back);
        let spec_json = serde_json::to_string(&spec).unwrap();
        let spec_back: ChainSpec<f64> = serde_json::from_str(&spec_json).unwrap();
        assert_eq!(spec, spec_back);
    }
}
