//! Scalar abstraction used throughout the crate.
//!
//! Every numeric routine is generic over [`Scalar`], a float type that also
//! exposes the error function (and therefore the standard normal CDF).
//! Sampling routines additionally require [`SampleScalar`], which knows how
//! to draw its own uniform and Gaussian variates. Concrete code should use
//! the `f64` aliases exported from the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating point scalar with the special functions needed for Gaussian
/// tail computations.
pub trait Scalar:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Error function.
    fn erf(self) -> Self;

    /// Complementary error function, accurate for large positive arguments.
    fn erfc(self) -> Self;

    /// Shorthand for embedding an `f64` literal into the scalar type.
    ///
    /// Panics only if the literal is not representable, which cannot happen
    /// for the in-range constants this crate uses.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable in scalar type")
    }

    /// Standard normal CDF. Routed through `erfc` so the lower tail keeps
    /// full relative precision.
    fn std_normal_cdf(self) -> Self {
        let half = Self::lit(0.5);
        let inv_sqrt2 = Self::lit(std::f64::consts::FRAC_1_SQRT_2);
        half * (-self * inv_sqrt2).erfc()
    }

    /// Standard normal density.
    fn std_normal_pdf(self) -> Self {
        let inv_sqrt_2pi = Self::lit(0.398_942_280_401_432_7);
        inv_sqrt_2pi * (-self * self * Self::lit(0.5)).exp()
    }
}

impl Scalar for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }

    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Scalar for f32 {
    fn erf(self) -> Self {
        libm::erf(self as f64) as f32
    }

    fn erfc(self) -> Self {
        libm::erfc(self as f64) as f32
    }
}

/// Scalar that can draw its own random variates.
///
/// The draw methods live on the scalar rather than on the RNG so generic
/// sampler code avoids `where StandardNormal: Distribution<T>` bounds at
/// every call site.
pub trait SampleScalar: Scalar {
    /// One standard normal draw.
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One uniform draw from `[0, 1)`.
    fn sample_unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl SampleScalar for f64 {
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn sample_unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }
}

impl SampleScalar for f32 {
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn sample_unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }
}
