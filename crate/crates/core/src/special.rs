//! Small numeric helpers shared by the certificate and sampler modules.

use crate::scalar::Scalar;

/// CDF of a normal distribution with the given mean and standard deviation.
pub fn normal_cdf<T: Scalar>(x: T, mean: T, sd: T) -> T {
    ((x - mean) / sd).std_normal_cdf()
}

/// Density of a normal distribution with the given mean and standard
/// deviation.
pub fn normal_pdf<T: Scalar>(x: T, mean: T, sd: T) -> T {
    ((x - mean) / sd).std_normal_pdf() / sd
}

/// `n` evenly spaced points from `a` to `b` inclusive.
///
/// `n = 1` returns `[a]`. Callers that need strict monotonicity must pass
/// `a < b` and `n` small enough that adjacent points stay distinct.
pub fn linspace<T: Scalar>(a: T, b: T, n: usize) -> Vec<T> {
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![a];
    }
    let step = (b - a) / T::from_usize(n - 1).expect("count fits scalar");
    (0..n)
        .map(|i| {
            if i == n - 1 {
                b
            } else {
                a + step * T::from_usize(i).expect("index fits scalar")
            }
        })
        .collect()
}

/// Numerically stable `log(sum(exp(terms)))`.
///
/// Returns negative infinity for an empty slice, matching the sum-of-zero
/// convention. Non-finite positive entries propagate as positive infinity.
pub fn log_sum_exp<T: Scalar>(terms: &[T]) -> T {
    let mut max = T::neg_infinity();
    for &t in terms {
        if t > max {
            max = t;
        }
    }
    if !max.is_finite() {
        // Either empty / all -inf (sum is zero, log is -inf) or a +inf term
        // dominates; both cases are exactly `max`.
        return max;
    }
    let mut acc = T::zero();
    for &t in terms {
        acc += (t - max).exp();
    }
    max + acc.ln()
}

/// Mean of `log_sum_exp` exponentials: `log(mean(exp(terms)))`.
pub fn log_mean_exp<T: Scalar>(terms: &[T]) -> T {
    if terms.is_empty() {
        return T::neg_infinity();
    }
    log_sum_exp(terms) - T::from_usize(terms.len()).expect("len fits scalar").ln()
}
