//! Model ingredients: unnormalized targets, symmetric proposals, Lyapunov
//! functions, and the checks that tie them together.
//!
//! A sampler run needs three declared objects: an [`UnnormalizedTarget`]
//! `h`, a [`SymmetricProposal`] `q`, and a [`LyapunovFunction`] `V`. The
//! checks in this module verify the analytic assumptions those objects are
//! supposed to satisfy: tail log-concavity of `h` beyond a threshold
//! ([`check_log_concavity`]) and the geometric drift condition
//! `PV <= beta V + b` for a given step kernel ([`verify_drift`]).

use std::sync::Arc;

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::integrate;
use crate::rng::RngStream;
use crate::scalar::{SampleScalar, Scalar};

/// Shared single-argument function handle.
pub type ScalarFn<S> = Arc<dyn Fn(S) -> S + Send + Sync>;

/// Shared two-argument function handle, used for transition densities.
pub type PairFn<S> = Arc<dyn Fn(S, S) -> S + Send + Sync>;

/// Shared one-step simulator handle.
pub type StepFn<S> = Arc<dyn Fn(S, &mut ChaCha12Rng) -> S + Send + Sync>;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Closed families of unnormalized target densities.
///
/// Every family evaluates `log h`; none carries a normalizing constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub enum TargetDensity<S> {
    /// `h(x) = exp(-((x - center)/scale)^2)`.
    SquaredExp { center: S, scale: S },
    /// `h(x) = exp(-rate |x|)`.
    AbsExp { rate: S },
    /// `h(x) = 1/(1 + x^2)`; heavy-tailed, no finite mean.
    Cauchy,
    /// Normalized Gaussian density; useful when `h` doubles as a proposal.
    NormalizedGaussian { mean: S, sd: S },
}

impl<S: Scalar> TargetDensity<S> {
    /// Log density up to the (unknown) normalizing constant.
    pub fn log_h(&self, x: S) -> S {
        match *self {
            TargetDensity::SquaredExp { center, scale } => {
                let t = (x - center) / scale;
                -(t * t)
            }
            TargetDensity::AbsExp { rate } => -(rate * x.abs()),
            TargetDensity::Cauchy => -(S::one() + x * x).ln(),
            TargetDensity::NormalizedGaussian { mean, sd } => {
                let t = (x - mean) / sd;
                -(t * t) * S::lit(0.5) - sd.ln() - S::lit(LN_SQRT_2PI)
            }
        }
    }

    /// Mean of the normalized density, where it exists.
    pub fn mean(&self) -> Option<S> {
        match *self {
            TargetDensity::SquaredExp { center, .. } => Some(center),
            TargetDensity::AbsExp { .. } => Some(S::zero()),
            TargetDensity::Cauchy => None,
            TargetDensity::NormalizedGaussian { mean, .. } => Some(mean),
        }
    }
}

/// Declared tail behaviour of a target: log-concavity with decay rate
/// `alpha` beyond the threshold `|x| > x1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct TailLogConcavity<S> {
    /// Decay rate; positive.
    pub alpha: S,
    /// Threshold beyond which the decay is claimed; nonnegative.
    pub x1: S,
}

/// An unnormalized target density with optional declared tail behaviour and
/// optional known mean (used as ground truth in studies).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct UnnormalizedTarget<S> {
    pub density: TargetDensity<S>,
    pub tail: Option<TailLogConcavity<S>>,
    pub true_mean: Option<S>,
}

impl<S: Scalar> UnnormalizedTarget<S> {
    /// Target with no declared tail; `true_mean` defaults to the family mean.
    pub fn new(density: TargetDensity<S>) -> Self {
        Self { density, tail: None, true_mean: density.mean() }
    }

    /// Attach tail parameters. Rejects nonpositive `alpha` or negative `x1`.
    pub fn with_tail(mut self, alpha: S, x1: S) -> Result<Self> {
        if !(alpha > S::zero() && alpha.is_finite()) {
            return Err(Error::Config(format!("tail alpha must be positive, got {alpha}")));
        }
        if !(x1 >= S::zero() && x1.is_finite()) {
            return Err(Error::Config(format!("tail threshold x1 must be nonnegative, got {x1}")));
        }
        self.tail = Some(TailLogConcavity { alpha, x1 });
        Ok(self)
    }

    /// Override the ground-truth mean.
    pub fn with_true_mean(mut self, m: S) -> Self {
        self.true_mean = Some(m);
        self
    }

    pub fn log_h(&self, x: S) -> S {
        self.density.log_h(x)
    }

    pub fn h(&self, x: S) -> S {
        self.density.log_h(x).exp()
    }
}

/// Closed families of symmetric proposal densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub enum ProposalDensity<S> {
    StandardNormal,
    Normal { sd: S },
}

impl<S: Scalar> ProposalDensity<S> {
    fn sd(&self) -> S {
        match *self {
            ProposalDensity::StandardNormal => S::one(),
            ProposalDensity::Normal { sd } => sd,
        }
    }
}

/// A symmetric, normalized proposal density `q` with an exponential
/// envelope `q(x) <= C exp(-alpha |x|)`.
///
/// The envelope drives tail truncation in quadratures and the validity
/// condition of the regenerative drift bound (which needs `alpha > 2 s`
/// for the exponential Lyapunov family).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct SymmetricProposal<S> {
    pub density: ProposalDensity<S>,
    /// Envelope scale `C`.
    pub envelope_scale: S,
    /// Envelope rate `alpha`; positive.
    pub envelope_rate: S,
}

impl<S: Scalar> SymmetricProposal<S> {
    /// Standard normal proposal with the tight unit-rate envelope
    /// `C = e^{1/2}/sqrt(2 pi)`, `alpha = 1`.
    pub fn standard_normal() -> Self {
        Self {
            density: ProposalDensity::StandardNormal,
            envelope_scale: S::lit(0.5).exp() * S::lit(0.398_942_280_401_432_7),
            envelope_rate: S::one(),
        }
    }

    /// Centered normal proposal with standard deviation `sd` and the tight
    /// envelope at rate `1/sd`.
    pub fn normal(sd: S) -> Result<Self> {
        if !(sd > S::zero() && sd.is_finite()) {
            return Err(Error::Config(format!("proposal sd must be positive, got {sd}")));
        }
        let c = S::lit(0.5).exp() * S::lit(0.398_942_280_401_432_7) / sd;
        Ok(Self {
            density: ProposalDensity::Normal { sd },
            envelope_scale: c,
            envelope_rate: sd.recip(),
        })
    }

    /// Replace the envelope constants. The pair is validated by
    /// [`SymmetricProposal::validate`].
    pub fn with_envelope(mut self, scale: S, rate: S) -> Result<Self> {
        if !(scale > S::zero() && rate > S::zero()) {
            return Err(Error::Config("envelope constants must be positive".into()));
        }
        self.envelope_scale = scale;
        self.envelope_rate = rate;
        self.validate()?;
        Ok(self)
    }

    pub fn log_q(&self, z: S) -> S {
        let sd = self.density.sd();
        let t = z / sd;
        -(t * t) * S::lit(0.5) - sd.ln() - S::lit(LN_SQRT_2PI)
    }

    pub fn q(&self, z: S) -> S {
        self.log_q(z).exp()
    }

    /// One proposal draw.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> S
    where
        S: SampleScalar,
    {
        self.density.sd() * S::sample_standard_normal(rng)
    }

    /// Half-width `T` such that the envelope tail mass beyond `T` is below
    /// `eps`: `C exp(-alpha T)/alpha <= eps`.
    pub fn envelope_halfwidth(&self, eps: S) -> S {
        ((self.envelope_scale / (self.envelope_rate * eps)).ln() / self.envelope_rate)
            .max(S::one())
    }

    /// Check symmetry, normalization (within 1e-8), and the envelope
    /// inequality on a wide grid.
    pub fn validate(&self) -> Result<()> {
        let tol = S::lit(1e-12);
        let hw = self.envelope_halfwidth(S::lit(1e-13)).max(S::lit(10.0));
        for &z in &crate::special::linspace(S::lit(0.01), hw, 257) {
            if (self.log_q(z) - self.log_q(-z)).abs() > tol {
                return Err(Error::Config(format!("proposal density is not symmetric at z = {z}")));
            }
            let envelope_log = self.envelope_scale.ln() - self.envelope_rate * z.abs();
            if self.log_q(z) > envelope_log + tol {
                return Err(Error::Config(format!(
                    "proposal envelope C exp(-alpha|z|) lies below the density at z = {z}"
                )));
            }
        }
        let mass = integrate(|z| self.q(z), -hw, hw, S::lit(1e-10))?.value;
        if (mass - S::one()).abs() > S::lit(1e-8) {
            return Err(Error::Config(format!(
                "proposal density integrates to {mass}, expected 1 within 1e-8"
            )));
        }
        Ok(())
    }
}

/// Lyapunov (drift) function families. All members satisfy `V >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub enum LyapunovFunction<S> {
    /// `V(x) = exp(s |x|)`; pairs with exponential-tail targets.
    ExpAbs { s: S },
    /// `V(x) = 1 + x^2`; pairs with the linear autoregressive chain.
    OnePlusSquare,
}

impl<S: Scalar> LyapunovFunction<S> {
    pub fn exp_abs(s: S) -> Result<Self> {
        if !(s > S::zero() && s.is_finite()) {
            return Err(Error::Config(format!("exp-abs growth rate s must be positive, got {s}")));
        }
        Ok(LyapunovFunction::ExpAbs { s })
    }

    pub fn one_plus_square() -> Self {
        LyapunovFunction::OnePlusSquare
    }

    pub fn eval(&self, x: S) -> S {
        match *self {
            LyapunovFunction::ExpAbs { s } => (s * x.abs()).exp(),
            LyapunovFunction::OnePlusSquare => S::one() + x * x,
        }
    }

    /// `V(x)^2`, computed as the exact square of `eval`.
    pub fn eval_sq(&self, x: S) -> S {
        let v = self.eval(x);
        v * v
    }

    /// Half-width of the sublevel set `{V <= r}`, which is an interval
    /// centred at the origin for both families.
    pub fn small_set_halfwidth(&self, r: S) -> Result<S> {
        if !(r >= S::one()) {
            return Err(Error::Precondition(format!(
                "sublevel set {{V <= {r}}} is empty; V has minimum 1"
            )));
        }
        Ok(match *self {
            LyapunovFunction::ExpAbs { s } => r.ln() / s,
            LyapunovFunction::OnePlusSquare => (r - S::one()).sqrt(),
        })
    }
}

/// Result of a tail log-concavity check.
#[derive(Debug, Clone, Copy)]
pub struct LogConcavityReport<S> {
    pub pass: bool,
    /// Largest value of `log h(y) - log h(x) + alpha (|y| - |x|)` over
    /// checked pairs; nonpositive (within tolerance) when the tail decays
    /// at the declared rate.
    pub max_log_excess: S,
    /// Pair attaining the maximum, `(x, y)` with `|y| >= |x|`.
    pub worst_pair: Option<(S, S)>,
    pub alpha: S,
    pub x1: S,
    pub tolerance: S,
}

/// Brute-force pairwise check that the target's declared tail decay holds
/// on the grid: `h(y)/h(x) <= exp(-alpha (|y| - |x|))` for all grid pairs
/// with `|y| >= |x|`.
///
/// Requires the target to declare tail parameters and every grid point to
/// satisfy `|x| > x1`; the grid must be strictly increasing.
pub fn check_log_concavity<S: Scalar>(
    target: &UnnormalizedTarget<S>,
    grid: &[S],
) -> Result<LogConcavityReport<S>> {
    let tail = target.tail.ok_or_else(|| {
        Error::Config("target declares no tail parameters to check".into())
    })?;
    if grid.is_empty() {
        return Err(Error::Config("log-concavity grid is empty".into()));
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Config(format!(
                "log-concavity grid must be strictly increasing, saw {} then {}",
                w[0], w[1]
            )));
        }
    }
    for &x in grid {
        if !(x.abs() > tail.x1) {
            return Err(Error::Config(format!(
                "log-concavity grid point {x} is inside the tail threshold |x| > {}",
                tail.x1
            )));
        }
    }
    let log_h: Vec<S> = grid
        .iter()
        .map(|&x| {
            let v = target.log_h(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Evaluation(format!("log h({x}) is not finite")))
            }
        })
        .collect::<Result<_>>()?;
    let tolerance = S::lit(1e-12);
    let mut max_log_excess = S::neg_infinity();
    let mut worst_pair = None;
    for (i, &x) in grid.iter().enumerate() {
        for (j, &y) in grid.iter().enumerate() {
            if y.abs() < x.abs() {
                continue;
            }
            let excess = log_h[j] - log_h[i] + tail.alpha * (y.abs() - x.abs());
            if excess > max_log_excess {
                max_log_excess = excess;
                worst_pair = Some((x, y));
            }
        }
    }
    Ok(LogConcavityReport {
        pass: max_log_excess <= tolerance,
        max_log_excess,
        worst_pair,
        alpha: tail.alpha,
        x1: tail.x1,
        tolerance,
    })
}

/// One-step conditional expectation oracle for a Markov kernel, in the
/// representation best suited to each verification method.
#[derive(Clone)]
pub enum StepKernel<S> {
    /// Closed-form `x -> E[V(X_1) | X_0 = x]` for one specific paired `V`.
    ClosedForm(ScalarFn<S>),
    /// Transition density `(x, y) -> p(x, y)` with a support hint giving
    /// the integration window for each starting point.
    TransitionDensity { density: PairFn<S>, support: Arc<dyn Fn(S) -> (S, S) + Send + Sync> },
    /// Random walk Metropolis kernel assembled from a target and proposal.
    Rwm { target: UnnormalizedTarget<S>, proposal: SymmetricProposal<S> },
    /// One-step simulator, for Monte Carlo verification.
    Simulator(StepFn<S>),
}

impl<S> std::fmt::Debug for StepKernel<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            StepKernel::ClosedForm(_) => "ClosedForm",
            StepKernel::TransitionDensity { .. } => "TransitionDensity",
            StepKernel::Rwm { .. } => "Rwm",
            StepKernel::Simulator(_) => "Simulator",
        };
        f.write_str(name)
    }
}

/// How to evaluate `PV` at the check points.
#[derive(Debug, Clone, Copy)]
pub enum CheckMethod<S> {
    /// Use the kernel's closed form directly.
    ClosedForm,
    /// Numerical integration to the given absolute tolerance.
    Quadrature { tolerance: S },
    /// Sample-mean estimate with `draws` one-step simulations per point.
    MonteCarlo { draws: u64, stream: RngStream },
}

impl<S: Scalar> CheckMethod<S> {
    /// Quadrature at the default 1e-8 tolerance.
    pub fn quadrature() -> Self {
        CheckMethod::Quadrature { tolerance: S::lit(1e-8) }
    }
}

/// One check point of a drift verification.
#[derive(Debug, Clone, Copy)]
pub struct DriftPoint<S> {
    pub x: S,
    /// Estimated or computed `E[V(X_1) | X_0 = x]`.
    pub pv: S,
    /// `beta V(x) + b`.
    pub bound: S,
    /// Standard error of `pv`, Monte Carlo method only.
    pub std_err: Option<S>,
}

/// Outcome of [`verify_drift`].
#[derive(Debug, Clone)]
pub struct DriftCheckReport<S> {
    pub beta: S,
    pub b: S,
    /// Largest `pv - bound` over check points (negative when the drift
    /// inequality holds strictly).
    pub max_violation: S,
    pub points: Vec<DriftPoint<S>>,
    /// Allowed violation for deterministic methods. Monte Carlo points are
    /// judged against three times their own standard error instead.
    pub tolerance: S,
    pub pass: bool,
}

/// Check the drift inequality `PV(x) <= beta V(x) + b` at the given points.
///
/// Deterministic methods pass when the worst violation is at most the
/// method tolerance; Monte Carlo passes when every violation is within
/// three standard errors of its own estimate.
pub fn verify_drift<S: SampleScalar>(
    kernel: &StepKernel<S>,
    v: &LyapunovFunction<S>,
    beta: S,
    b: S,
    check_points: &[S],
    method: CheckMethod<S>,
) -> Result<DriftCheckReport<S>> {
    if !(beta > S::zero() && beta < S::one()) {
        return Err(Error::Precondition(format!("drift rate beta must lie in (0,1), got {beta}")));
    }
    if !(b > S::zero() && b.is_finite()) {
        return Err(Error::Precondition(format!("drift offset b must be positive, got {b}")));
    }
    if check_points.is_empty() {
        return Err(Error::Config("drift check needs at least one point".into()));
    }
    let mut points = Vec::with_capacity(check_points.len());
    let mut max_violation = S::neg_infinity();
    let mut mc_rng = match method {
        CheckMethod::MonteCarlo { stream, .. } => Some(stream.rng()),
        _ => None,
    };
    let mut pass = true;
    let tolerance = match method {
        CheckMethod::Quadrature { tolerance } => tolerance,
        _ => S::lit(1e-8),
    };
    for &x in check_points {
        let (pv, std_err) = match (&method, kernel) {
            (CheckMethod::ClosedForm, StepKernel::ClosedForm(f)) => (f(x), None),
            (CheckMethod::Quadrature { tolerance }, StepKernel::TransitionDensity { density, support }) => {
                let (lo, hi) = support(x);
                let d = density.clone();
                let value = integrate(|y| v.eval(y) * d(x, y), lo, hi, *tolerance)?.value;
                (value, None)
            }
            (CheckMethod::Quadrature { .. }, StepKernel::Rwm { target, proposal }) => {
                (rwm_pv_quadrature(target, proposal, v, x)?, None)
            }
            (CheckMethod::MonteCarlo { draws, .. }, StepKernel::Simulator(step)) => {
                let rng = mc_rng.as_mut().expect("stream prepared for MC method");
                let draws = *draws;
                if draws < 2 {
                    return Err(Error::Config("Monte Carlo drift check needs draws >= 2".into()));
                }
                let mut sum = S::zero();
                let mut sum_sq = S::zero();
                for _ in 0..draws {
                    let vy = v.eval(step(x, rng));
                    sum += vy;
                    sum_sq += vy * vy;
                }
                let n = S::from_u64(draws).expect("draw count fits scalar");
                let mean = sum / n;
                let var = ((sum_sq - sum * sum / n) / (n - S::one())).max(S::zero());
                (mean, Some((var / n).sqrt()))
            }
            _ => {
                return Err(Error::Config(format!(
                    "check method does not match kernel representation {kernel:?}"
                )))
            }
        };
        let bound = beta * v.eval(x) + b;
        let violation = pv - bound;
        if violation > max_violation {
            max_violation = violation;
        }
        let point_ok = match std_err {
            Some(se) => violation <= S::lit(3.0) * se,
            None => violation <= tolerance,
        };
        pass = pass && point_ok;
        points.push(DriftPoint { x, pv, bound, std_err });
    }
    Ok(DriftCheckReport { beta, b, max_violation, points, tolerance, pass })
}

/// `E[a V(x+Z) + (1-a) V(x)]` under the proposal, where `a` is the
/// Metropolis acceptance probability for the move `x -> x + Z`.
fn rwm_pv_quadrature<S: Scalar>(
    target: &UnnormalizedTarget<S>,
    proposal: &SymmetricProposal<S>,
    v: &LyapunovFunction<S>,
    x: S,
) -> Result<S> {
    let lh_x = target.log_h(x);
    if !lh_x.is_finite() {
        return Err(Error::Evaluation(format!("log h({x}) is not finite")));
    }
    let vx = v.eval(x);
    expectation_under_proposal(proposal, |z| {
        let y = x + z;
        let accept = (target.log_h(y) - lh_x).exp().min(S::one());
        accept * v.eval(y) + (S::one() - accept) * vx
    })
}

/// Expectation `E[g(Z)]` of an integrand under the proposal density,
/// evaluated by widening quadrature windows until the value stabilises.
///
/// The initial window is wide enough that the proposal's envelope tail mass
/// is negligible; the window then doubles until two consecutive values
/// agree to 1e-10, so that integrands growing slower than the envelope
/// decays converge and genuinely divergent ones report an error.
pub fn expectation_under_proposal<S: Scalar>(
    proposal: &SymmetricProposal<S>,
    integrand: impl Fn(S) -> S,
) -> Result<S> {
    let tol = S::lit(1e-10);
    let quad_tol = S::lit(1e-11);
    let mut hw = proposal.envelope_halfwidth(S::lit(1e-13)).max(S::lit(8.0));
    let f = |z: S| integrand(z) * proposal.q(z);
    let mut prev = integrate(f, -hw, hw, quad_tol)?.value;
    for _ in 0..8 {
        hw *= S::lit(2.0);
        let cur = match integrate(f, -hw, hw, quad_tol) {
            Ok(r) => r.value,
            Err(Error::Evaluation(msg)) => return Err(Error::Evaluation(msg)),
            Err(_) => {
                return Err(Error::Numerical(
                    "integrand under the proposal diverges in the tails".into(),
                ))
            }
        };
        if (cur - prev).abs() <= tol * S::one().max(cur.abs()) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Numerical(
        "expectation under the proposal did not stabilise; integrand outgrows the envelope".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::linspace;
    use crate::test_support::simpson;

    fn laplace_target() -> UnnormalizedTarget<f64> {
        UnnormalizedTarget::new(TargetDensity::AbsExp { rate: 1.0 })
            .with_tail(1.0, 0.5)
            .unwrap()
    }

    fn offset_gaussian_target() -> UnnormalizedTarget<f64> {
        UnnormalizedTarget::new(TargetDensity::SquaredExp { center: 1.0, scale: 1.0 })
            .with_tail(1.0, 2.0)
            .unwrap()
    }

    #[test]
    fn laplace_tail_is_exactly_log_concave_at_its_own_rate() {
        // For h = exp(-|x|) and alpha = 1 the defining inequality holds with
        // equality on same-sign pairs, so the max excess sits at zero.
        let grid = linspace(0.6f64, 8.0, 120);
        let report = check_log_concavity(&laplace_target(), &grid).unwrap();
        assert!(report.pass);
        assert!(report.max_log_excess.abs() < 1e-12);
    }

    #[test]
    fn offset_gaussian_tail_passes_beyond_threshold() {
        let grid = linspace(2.1f64, 10.0, 200);
        let report = check_log_concavity(&offset_gaussian_target(), &grid).unwrap();
        assert!(report.pass, "max excess {}", report.max_log_excess);
    }

    #[test]
    fn cauchy_tail_fails_any_exponential_rate() {
        let target =
            UnnormalizedTarget::new(TargetDensity::Cauchy).with_tail(0.05, 1.0).unwrap();
        let grid = linspace(1.5f64, 400.0, 200);
        let report = check_log_concavity(&target, &grid).unwrap();
        assert!(!report.pass);
        assert!(report.max_log_excess > 1.0);
        assert!(report.worst_pair.is_some());
    }

    #[test]
    fn log_concavity_monotone_in_rate() {
        // Passing at rate alpha implies passing at any smaller rate: the
        // excess is linear in alpha with nonnegative coefficient |y| - |x|.
        let grid = linspace(2.1f64, 9.0, 60);
        for &(hi, lo) in &[(1.0, 0.5), (2.0, 1.0), (0.8, 0.1)] {
            let t_hi = UnnormalizedTarget::new(TargetDensity::SquaredExp {
                center: 1.0,
                scale: 1.0,
            })
            .with_tail(hi, 2.0)
            .unwrap();
            let t_lo = t_hi.with_tail(lo, 2.0).unwrap();
            let r_hi = check_log_concavity(&t_hi, &grid).unwrap();
            let r_lo = check_log_concavity(&t_lo, &grid).unwrap();
            if r_hi.pass {
                assert!(r_lo.pass);
                assert!(r_lo.max_log_excess <= r_hi.max_log_excess + 1e-12);
            }
        }
    }

    #[test]
    fn log_concavity_rejects_bad_grids() {
        let t = laplace_target();
        assert!(matches!(check_log_concavity(&t, &[]), Err(Error::Config(_))));
        assert!(matches!(check_log_concavity(&t, &[1.0, 1.0]), Err(Error::Config(_))));
        // Point inside the threshold |x| > 0.5.
        assert!(matches!(check_log_concavity(&t, &[0.2, 1.0]), Err(Error::Config(_))));
        let untailed = UnnormalizedTarget::new(TargetDensity::AbsExp { rate: 1.0 });
        assert!(matches!(check_log_concavity(&untailed, &[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn lyapunov_families_stay_above_one() {
        let exp_v = LyapunovFunction::exp_abs(0.49f64).unwrap();
        let sq_v = LyapunovFunction::<f64>::one_plus_square();
        for &x in &[-25.0, -3.0, -0.1, 0.0, 0.7, 4.0, 30.0] {
            assert!(exp_v.eval(x) >= 1.0);
            assert!(sq_v.eval(x) >= 1.0);
            assert_eq!(exp_v.eval_sq(x), exp_v.eval(x) * exp_v.eval(x));
            assert_eq!(sq_v.eval_sq(x), sq_v.eval(x) * sq_v.eval(x));
        }
        assert!(LyapunovFunction::exp_abs(0.0f64).is_err());
        assert!(LyapunovFunction::exp_abs(-1.0f64).is_err());
    }

    #[test]
    fn sublevel_halfwidths_invert_eval() {
        let exp_v = LyapunovFunction::exp_abs(0.5f64).unwrap();
        let hw = exp_v.small_set_halfwidth(3.0).unwrap();
        assert!((exp_v.eval(hw) - 3.0).abs() < 1e-12);
        let sq_v = LyapunovFunction::<f64>::one_plus_square();
        let hw = sq_v.small_set_halfwidth(5.0).unwrap();
        assert!((sq_v.eval(hw) - 5.0).abs() < 1e-12);
        assert!(sq_v.small_set_halfwidth(0.5).is_err());
    }

    #[test]
    fn proposal_families_validate() {
        SymmetricProposal::<f64>::standard_normal().validate().unwrap();
        SymmetricProposal::normal(2.5f64).unwrap().validate().unwrap();
        // An envelope below the density must be rejected.
        let bad = SymmetricProposal::<f64>::standard_normal().with_envelope(0.01, 5.0);
        assert!(bad.is_err());
    }

    #[test]
    fn expectation_oracles() {
        let q = SymmetricProposal::<f64>::standard_normal();
        // Constant integrand recovers the proposal mass.
        let one = expectation_under_proposal(&q, |_| 1.0).unwrap();
        assert!((one - 1.0).abs() < 1e-10);
        // E[exp |Z|] for Z ~ N(0,1) against an independent Simpson oracle.
        let expected = simpson(|z: f64| z.abs().exp() * z.std_normal_pdf(), -40.0, 40.0, 40_000);
        let got = expectation_under_proposal(&q, |z| z.abs().exp()).unwrap();
        assert!((got - expected).abs() < 1e-9, "got {got}, oracle {expected}");
        // Known closed form 2 sqrt(e) Phi(1).
        let closed = 2.0 * 0.5f64.exp() * 1.0f64.std_normal_cdf();
        assert!((got - closed).abs() < 1e-10);
        // Odd integrand integrates to zero by symmetry.
        let odd = expectation_under_proposal(&q, |z| z * z * z).unwrap();
        assert!(odd.abs() < 1e-10);
        // Integrand outgrowing the Gaussian: divergence is reported.
        assert!(matches!(
            expectation_under_proposal(&q, |z| (z * z).exp()),
            Err(Error::Numerical(_) | Error::Evaluation(_))
        ));
    }

    fn ar1_closed_form_kernel() -> StepKernel<f64> {
        // E[1 + (x/2 + sqrt(3/4) N)^2] = 1 + x^2/4 + 3/4.
        StepKernel::ClosedForm(Arc::new(|x: f64| 0.25 * x * x + 1.75))
    }

    fn ar1_density_kernel() -> StepKernel<f64> {
        let sd = 0.75f64.sqrt();
        StepKernel::TransitionDensity {
            density: Arc::new(move |x: f64, y: f64| {
                crate::special::normal_pdf(y, 0.5 * x, sd)
            }),
            support: Arc::new(move |x: f64| (0.5 * x - 16.0 * sd, 0.5 * x + 16.0 * sd)),
        }
    }

    #[test]
    fn drift_holds_for_ar1_closed_form() {
        let v = LyapunovFunction::one_plus_square();
        let points = linspace(-30.0f64, 30.0, 101);
        let report = verify_drift(
            &ar1_closed_form_kernel(),
            &v,
            0.25,
            1.5,
            &points,
            CheckMethod::ClosedForm,
        )
        .unwrap();
        assert!(report.pass);
        // The closed form meets beta V + b with equality: 0.25(1+x^2)+1.5.
        assert!(report.max_violation.abs() < 1e-10);
    }

    #[test]
    fn drift_quadrature_matches_closed_form() {
        let v = LyapunovFunction::one_plus_square();
        let points = [-8.0f64, -2.5, 0.0, 1.0, 4.0, 9.0];
        let report = verify_drift(
            &ar1_density_kernel(),
            &v,
            0.25,
            1.5,
            &points,
            CheckMethod::quadrature(),
        )
        .unwrap();
        assert!(report.pass);
        for p in &report.points {
            let closed = 0.25 * p.x * p.x + 1.75;
            assert!((p.pv - closed).abs() < 1e-8, "x={} pv={} closed={closed}", p.x, p.pv);
        }
    }

    #[test]
    fn drift_monte_carlo_agrees_with_quadrature() {
        let v = LyapunovFunction::one_plus_square();
        let sd = 0.75f64.sqrt();
        let kernel = StepKernel::Simulator(Arc::new(move |x: f64, rng: &mut ChaCha12Rng| {
            0.5 * x + sd * f64::sample_standard_normal(rng)
        }));
        let points = [-4.0f64, 0.0, 3.0];
        let report = verify_drift(
            &kernel,
            &v,
            0.25,
            1.5,
            &points,
            CheckMethod::MonteCarlo { draws: 200_000, stream: RngStream::new(7) },
        )
        .unwrap();
        assert!(report.pass);
        for p in &report.points {
            let closed = 0.25 * p.x * p.x + 1.75;
            let se = p.std_err.unwrap();
            assert!((p.pv - closed).abs() <= 3.0 * se, "x={} pv={} se={se}", p.x, p.pv);
        }
    }

    #[test]
    fn drift_detects_false_certificates() {
        let v = LyapunovFunction::one_plus_square();
        let points = linspace(-10.0f64, 10.0, 41);
        // beta = 0.2 is below the true contraction rate 0.25, so far-out
        // points violate the claimed inequality.
        let report = verify_drift(
            &ar1_closed_form_kernel(),
            &v,
            0.2,
            1.5,
            &points,
            CheckMethod::ClosedForm,
        )
        .unwrap();
        assert!(!report.pass);
        assert!(report.max_violation > 0.0);
    }

    #[test]
    fn drift_rejects_mismatched_method() {
        let v = LyapunovFunction::one_plus_square();
        let err = verify_drift(
            &ar1_closed_form_kernel(),
            &v,
            0.25,
            1.5,
            &[0.0],
            CheckMethod::<f64>::quadrature(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn rwm_kernel_satisfies_example_drift() {
        // Offset-Gaussian target with standard normal proposal: the drift
        // certificate (0.83, 3.2) holds comfortably on a central window.
        let kernel = StepKernel::Rwm {
            target: offset_gaussian_target(),
            proposal: SymmetricProposal::standard_normal(),
        };
        let v = LyapunovFunction::exp_abs(0.49f64).unwrap();
        let points = linspace(-8.0f64, 8.0, 33);
        let report =
            verify_drift(&kernel, &v, 0.83, 3.2, &points, CheckMethod::quadrature()).unwrap();
        assert!(report.pass, "max violation {}", report.max_violation);
    }

    #[test]
    fn serde_roundtrip_for_model_types() {
        let t = offset_gaussian_target();
        let back: UnnormalizedTarget<f64> =
            serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(t, back);
        let p = SymmetricProposal::<f64>::standard_normal();
        let back: SymmetricProposal<f64> =
            serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, back);
        let v = LyapunovFunction::exp_abs(0.49f64).unwrap();
        let back: LyapunovFunction<f64> =
            serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(v, back);
    }
}
