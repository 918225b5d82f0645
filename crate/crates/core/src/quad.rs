//! Adaptive Gauss-Kronrod quadrature.
//!
//! A 7-point Gauss rule embedded in a 15-point Kronrod rule, refined by
//! recursive bisection. This is the workhorse behind every closed-form-free
//! constant in the crate (minorization overlaps, proposal expectations,
//! drift verification), so it reports an error estimate and fails loudly
//! instead of returning a silently inaccurate value.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Kronrod abscissae on `[0, 1]` (positive half, descending). The embedded
/// Gauss nodes sit at the odd indices.
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];

/// Gauss weights for the nodes at `XGK[1], XGK[3], XGK[5]` and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

const MAX_DEPTH: u32 = 40;
const MAX_EVALUATIONS: usize = 400_000;

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult<T> {
    /// Integral estimate.
    pub value: T,
    /// Accumulated error estimate (difference of embedded rules).
    pub error_estimate: T,
    /// Number of integrand evaluations performed.
    pub evaluations: usize,
}

struct Worker<'f, T, F: Fn(T) -> T> {
    f: &'f F,
    evaluations: usize,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar, F: Fn(T) -> T> Worker<'_, T, F> {
    fn eval(&mut self, x: T) -> Result<T> {
        self.evaluations += 1;
        if self.evaluations > MAX_EVALUATIONS {
            return Err(Error::Numerical(format!(
                "quadrature evaluation budget of {MAX_EVALUATIONS} exhausted"
            )));
        }
        let y = (self.f)(x);
        if !y.is_finite() {
            return Err(Error::Evaluation(format!(
                "integrand returned non-finite value {y} at x = {x}"
            )));
        }
        Ok(y)
    }

    /// One Gauss-Kronrod pass over `[a, b]`; returns (kronrod, |kronrod - gauss|).
    fn kronrod(&mut self, a: T, b: T) -> Result<(T, T)> {
        let half = (b - a) * T::lit(0.5);
        let centre = (a + b) * T::lit(0.5);
        let fc = self.eval(centre)?;
        let mut kronrod = T::lit(WGK[7]) * fc;
        let mut gauss = T::lit(WG[3]) * fc;
        for i in 0..7 {
            let dx = half * T::lit(XGK[i]);
            let pair = self.eval(centre - dx)? + self.eval(centre + dx)?;
            kronrod += T::lit(WGK[i]) * pair;
            if i % 2 == 1 {
                gauss += T::lit(WG[i / 2]) * pair;
            }
        }
        Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
    }

    fn refine(&mut self, a: T, b: T, tol: T, depth: u32, out: &mut (T, T)) -> Result<()> {
        let (value, err) = self.kronrod(a, b)?;
        if err <= tol || depth >= MAX_DEPTH {
            out.0 += value;
            out.1 += err;
            return Ok(());
        }
        let mid = (a + b) * T::lit(0.5);
        let half_tol = tol * T::lit(0.5);
        self.refine(a, mid, half_tol, depth + 1, out)?;
        self.refine(mid, b, half_tol, depth + 1, out)
    }
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Fails with [`Error::Numerical`] if the tolerance cannot be met within the
/// evaluation budget, and with [`Error::Evaluation`] if the integrand
/// produces a non-finite value.
pub fn integrate<T: Scalar, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T) -> Result<QuadratureResult<T>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Precondition(
            "integration limits must be finite; use integrate_real_line for the whole line".into(),
        ));
    }
    if !(tol > T::zero()) {
        return Err(Error::Precondition("quadrature tolerance must be positive".into()));
    }
    if a == b {
        return Ok(QuadratureResult { value: T::zero(), error_estimate: T::zero(), evaluations: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, T::one()) } else { (b, a, -T::one()) };
    let mut worker = Worker { f: &f, evaluations: 0, _marker: std::marker::PhantomData };
    let mut out = (T::zero(), T::zero());
    worker.refine(lo, hi, tol, 0, &mut out)?;
    if out.1 > tol * T::lit(4.0) {
        return Err(Error::Numerical(format!(
            "quadrature reached error estimate {} against requested tolerance {}",
            out.1, tol
        )));
    }
    Ok(QuadratureResult {
        value: sign * out.0,
        error_estimate: out.1,
        evaluations: worker.evaluations,
    })
}

/// Integrate `f` over the whole real line by widening a symmetric window
/// until the value stabilises.
///
/// Divergent integrands are reported as [`Error::Numerical`] once the window
/// exceeds the expansion limit without stabilising.
pub fn integrate_real_line<T: Scalar, F: Fn(T) -> T>(f: F, tol: T) -> Result<QuadratureResult<T>> {
    let mut half_width = T::lit(8.0);
    let limit = T::lit(1.0e9);
    let inner_tol = tol * T::lit(0.5);
    let mut previous = integrate(&f, -half_width, half_width, inner_tol)?;
    loop {
        half_width *= T::lit(2.0);
        let current = integrate(&f, -half_width, half_width, inner_tol)?;
        let drift = (current.value - previous.value).abs();
        let scale = T::one().max(current.value.abs());
        if drift <= tol * scale {
            return Ok(QuadratureResult {
                value: current.value,
                error_estimate: current.error_estimate + drift,
                evaluations: previous.evaluations + current.evaluations,
            });
        }
        if half_width > limit {
            return Err(Error::Numerical(format!(
                "integral over the real line did not stabilise by half-width {half_width}; \
                 the integrand appears to diverge"
            )));
        }
        previous = current;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_essentially_exact() {
        // K15 integrates degree-22 polynomials exactly; x^2 is child's play.
        let r = integrate(|x: f64| x * x, 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn sine_arch() {
        let r = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kinked_integrand_forces_refinement() {
        let r = integrate(|x: f64| (x - 0.5).abs(), 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 0.25).abs() < 1e-12);
        assert!(r.evaluations > 15);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let r = integrate(|x: f64| x * x, 1.0, 0.0, 1e-12).unwrap();
        assert!((r.value + 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_density_has_unit_mass() {
        let r = integrate_real_line(|x: f64| x.std_normal_pdf(), 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn gaussian_second_moment() {
        let r = integrate_real_line(|x: f64| x * x * x.std_normal_pdf(), 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn divergent_integrand_is_reported() {
        let err = integrate_real_line(|x: f64| 1.0 / (1.0 + x * x).sqrt(), 1e-10).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let err = integrate(|x: f64| 1.0 / x, -1.0, 1.0, 1e-10).unwrap_err();
        assert!(matches!(err, Error::Evaluation(_) | Error::Numerical(_)));
    }

    #[test]
    fn infinite_limit_is_rejected() {
        let err = integrate(|x: f64| x, 0.0, f64::INFINITY, 1e-10).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
