//! Sample diagnostics: two-sample Kolmogorov-Smirnov distance, quantiles,
//! and batch-means standard errors for correlated sequences.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Survival function of the Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)`.
///
/// The alternating series converges quickly only for large arguments, so
/// below `lambda = 1` the Jacobi-transformed series for the CDF
/// `F(lambda) = (sqrt(2 pi)/lambda) sum_{k odd} exp(-k^2 pi^2 / (8 lambda^2))`
/// is used instead; each branch needs only a handful of terms. Results are
/// clamped to `[0, 1]` to absorb roundoff in the partial sums.
pub fn kolmogorov_sf<S: Scalar>(lambda: S) -> S {
    if lambda < S::lit(0.01) {
        // F is below 1e-300 here; also dodges 0 * inf at denormal arguments.
        return S::one();
    }
    let two = S::lit(2.0);
    let q = if lambda < S::one() {
        let scale = -S::lit(std::f64::consts::PI * std::f64::consts::PI)
            / (S::lit(8.0) * lambda * lambda);
        let mut cdf_sum = S::zero();
        for k in [1.0, 3.0, 5.0, 7.0, 9.0] {
            let kk = S::lit(k);
            let term = (scale * kk * kk).exp();
            cdf_sum += term;
            if term < S::lit(1e-17) {
                break;
            }
        }
        S::one() - S::lit((2.0 * std::f64::consts::PI).sqrt()) / lambda * cdf_sum
    } else {
        let mut sum = S::zero();
        let mut sign = S::one();
        for j in 1..=40 {
            let jj = S::from_usize(j).expect("small integer fits any float");
            let term = (-two * jj * jj * lambda * lambda).exp();
            sum += sign * term;
            if term < S::lit(1e-17) {
                break;
            }
            sign = -sign;
        }
        two * sum
    };
    q.max(S::zero()).min(S::one())
}

/// Result of a two-sample Kolmogorov-Smirnov comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct KsReport<S> {
    pub statistic: S,
    /// Asymptotic p-value for the hypothesis that both samples share a
    /// distribution. Approximate for small samples; use as a smoke alarm,
    /// not a calibrated test.
    pub p_value: S,
    pub n_left: usize,
    pub n_right: usize,
}

fn sorted_copy<S: Scalar>(data: &[S], label: &str) -> Result<Vec<S>> {
    if data.is_empty() {
        return Err(Error::Empty(format!("{label} sample is empty")));
    }
    if data.iter().any(|x| x.is_nan()) {
        return Err(Error::Evaluation(format!("{label} sample contains NaN")));
    }
    let mut v = data.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN screened above"));
    Ok(v)
}

/// Two-sample Kolmogorov-Smirnov statistic with the asymptotic p-value
/// `Q((sqrt(ne) + 0.12 + 0.11/sqrt(ne)) D)` where `ne = n1 n2 / (n1 + n2)`.
pub fn two_sample_ks<S: Scalar>(left: &[S], right: &[S]) -> Result<KsReport<S>> {
    let a = sorted_copy(left, "left")?;
    let b = sorted_copy(right, "right")?;
    let (na, nb) = (a.len(), b.len());
    let (fa, fb) = (S::from_usize(na).unwrap(), S::from_usize(nb).unwrap());
    let mut d = S::zero();
    let (mut i, mut j) = (0usize, 0usize);
    while i < na && j < nb {
        // Advance past ties in lockstep so both empirical CDFs are evaluated
        // strictly after the tied value.
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        let gap = (S::from_usize(i).unwrap() / fa - S::from_usize(j).unwrap() / fb).abs();
        d = d.max(gap);
    }
    let ne = (fa * fb / (fa + fb)).sqrt();
    let lambda = (ne + S::lit(0.12) + S::lit(0.11) / ne) * d;
    Ok(KsReport {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
        n_left: na,
        n_right: nb,
    })
}

/// Linear-interpolation quantile (the default of most statistics packages)
/// on already-sorted data: index `h = (n - 1) p`, interpolated between the
/// bracketing order statistics.
pub fn quantile_sorted<S: Scalar>(sorted: &[S], p: S) -> Result<S> {
    if sorted.is_empty() {
        return Err(Error::Empty("quantile of an empty sample".into()));
    }
    if !(S::zero()..=S::one()).contains(&p) {
        return Err(Error::Precondition(format!(
            "quantile level must lie in [0, 1], got {p:?}"
        )));
    }
    let n = sorted.len();
    let h = S::from_usize(n - 1).unwrap() * p;
    let lo = h.floor();
    let idx = lo.to_usize().unwrap_or(0).min(n - 1);
    let hi = (idx + 1).min(n - 1);
    let frac = h - lo;
    Ok(sorted[idx] + frac * (sorted[hi] - sorted[idx]))
}

/// Quantiles at several levels, sorting once.
pub fn quantiles<S: Scalar>(data: &[S], levels: &[S]) -> Result<Vec<S>> {
    let sorted = sorted_copy(data, "quantile")?;
    levels.iter().map(|&p| quantile_sorted(&sorted, p)).collect()
}

/// Sample mean.
pub fn sample_mean<S: Scalar>(data: &[S]) -> Result<S> {
    if data.is_empty() {
        return Err(Error::Empty("mean of an empty sample".into()));
    }
    let sum = data.iter().fold(S::zero(), |acc, &x| acc + x);
    Ok(sum / S::from_usize(data.len()).unwrap())
}

/// Unbiased sample variance (divisor `n - 1`).
pub fn sample_variance<S: Scalar>(data: &[S]) -> Result<S> {
    if data.len() < 2 {
        return Err(Error::Precondition(
            "variance needs at least two observations".into(),
        ));
    }
    let mean = sample_mean(data)?;
    let ss = data.iter().fold(S::zero(), |acc, &x| {
        let d = x - mean;
        acc + d * d
    });
    Ok(ss / S::from_usize(data.len() - 1).unwrap())
}

/// Standard error of the sample mean under an iid assumption.
pub fn mean_se<S: Scalar>(data: &[S]) -> Result<S> {
    Ok((sample_variance(data)? / S::from_usize(data.len()).unwrap()).sqrt())
}

/// Batch-means standard error for the mean of a correlated sequence:
/// split into `n_batches` contiguous batches (trailing remainder dropped),
/// and report `sd(batch means) / sqrt(n_batches)`.
pub fn batch_means_se<S: Scalar>(data: &[S], n_batches: usize) -> Result<S> {
    if n_batches < 2 {
        return Err(Error::Precondition(
            "batch means need at least two batches".into(),
        ));
    }
    let batch_len = data.len() / n_batches;
    if batch_len < 1 {
        return Err(Error::Precondition(format!(
            "cannot split {} observations into {} batches",
            data.len(),
            n_batches
        )));
    }
    let means: Vec<S> = (0..n_batches)
        .map(|k| {
            let chunk = &data[k * batch_len..(k + 1) * batch_len];
            sample_mean(chunk).expect("batch is nonempty")
        })
        .collect();
    mean_se(&means)
}
