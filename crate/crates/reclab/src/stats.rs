//! Empirical distribution functions and Kolmogorov-Smirnov distances against
//! the closed-form limit laws used throughout the crate.

use crate::error::{Error, Result};

/// Empirical CDF of a sample, optionally with right-censored observations.
///
/// A censored observation is one known only to exceed every recorded value
/// (a run that was still "alive" when recording stopped). Censored mass stays
/// in the denominator but never enters the numerator, so `cdf` is exact below
/// the censoring horizon, which is the only region ever queried.
#[derive(Clone, Debug)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
    censored: usize,
}

impl EmpiricalCdf {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_censored(values, 0)
    }

    pub fn with_censored(mut values: Vec<f64>, censored: usize) -> Result<Self> {
        if values.is_empty() && censored == 0 {
            return Err(Error::EmptySample);
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain("sample contains NaN".into()));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EmpiricalCdf { sorted: values, censored })
    }

    pub fn len(&self) -> usize {
        self.sorted.len() + self.censored
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn observed(&self) -> &[f64] {
        &self.sorted
    }

    pub fn censored(&self) -> usize {
        self.censored
    }

    /// `#{observations <= x} / n`, counting censored observations in `n`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.sorted.partition_point(|v| *v <= x);
        k as f64 / self.len() as f64
    }

    /// Survival function `1 - cdf`.
    pub fn survival(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }
}

/// Closed-form reference distributions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReferenceLaw {
    /// Standard exponential on `[0, inf)`.
    Exponential,
    /// Standard Gumbel, `exp(-exp(-y))`.
    Gumbel,
    /// Frechet with shape `beta`: `exp(-y^{-beta})` on `y > 0`.
    Frechet { beta: f64 },
    /// Weibull with shape `gamma`: `exp(-(-y)^gamma)` on `y <= 0`.
    Weibull { gamma: f64 },
    /// Uniform on `[0, 1]`.
    Uniform,
}

impl ReferenceLaw {
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ReferenceLaw::Exponential => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-x).exp()
                }
            }
            ReferenceLaw::Gumbel => (-(-x).exp()).exp(),
            ReferenceLaw::Frechet { beta } => {
                if x <= 0.0 {
                    0.0
                } else {
                    (-x.powf(-beta)).exp()
                }
            }
            ReferenceLaw::Weibull { gamma } => {
                if x >= 0.0 {
                    1.0
                } else {
                    (-(-x).powf(*gamma)).exp()
                }
            }
            ReferenceLaw::Uniform => x.clamp(0.0, 1.0),
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }
}

/// Sup-distance between the empirical CDF and a reference law.
///
/// The supremum over the real line is attained at a sample point, approached
/// from the left or the right of the jump, so checking both one-sided values
/// at every observation is exact.
pub fn ks_distance(empirical: &EmpiricalCdf, law: ReferenceLaw) -> Result<f64> {
    let xs = empirical.observed();
    if xs.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = empirical.len() as f64;
    let mut sup: f64 = 0.0;
    let mut below = 0usize;
    for (i, x) in xs.iter().enumerate() {
        // Count of strictly-smaller observations = i minus ties walked past.
        while below < i && xs[below] < *x {
            below += 1;
        }
        let f = law.cdf(*x);
        let hi = (i + 1) as f64 / n;
        let lo = below as f64 / n;
        sup = sup.max((hi - f).abs()).max((f - lo).abs());
    }
    Ok(sup)
}

/// Sup-distance between the empirical CDF and an arbitrary reference CDF,
/// evaluated over the sample's jump points.
pub fn ks_distance_fn(empirical: &EmpiricalCdf, cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let xs = empirical.observed();
    if xs.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = empirical.len() as f64;
    let mut sup: f64 = 0.0;
    let mut below = 0usize;
    for (i, x) in xs.iter().enumerate() {
        while below < i && xs[below] < *x {
            below += 1;
        }
        let f = cdf(*x);
        if f.is_nan() {
            return Err(Error::Domain(format!("reference CDF returned NaN at {x}")));
        }
        let hi = (i + 1) as f64 / n;
        let lo = below as f64 / n;
        sup = sup.max((hi - f).abs()).max((f - lo).abs());
    }
    Ok(sup)
}

/// Largest absolute residual of the best non-increasing least-squares fit
/// (pool-adjacent-violators). Zero exactly when the sequence is already
/// non-increasing; used to assert monotone decay up to sampling noise.
pub fn isotonic_decreasing_residual(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    // PAVA on the negated sequence: keep a stack of (sum, len) blocks whose
    // means must be non-decreasing, merging while they are not.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((-v, 1));
        while blocks.len() >= 2 {
            let (s2, n2) = blocks[blocks.len() - 1];
            let (s1, n1) = blocks[blocks.len() - 2];
            if s1 / n1 as f64 > s2 / n2 as f64 {
                blocks.truncate(blocks.len() - 2);
                blocks.push((s1 + s2, n1 + n2));
            } else {
                break;
            }
        }
    }
    let mut residual: f64 = 0.0;
    let mut i = 0;
    for (s, n) in blocks {
        let fit = -(s / n as f64);
        for _ in 0..n {
            residual = residual.max((values[i] - fit).abs());
            i += 1;
        }
    }
    residual
}

/// Sample mean and 95% CI half-width.
pub fn mean_with_ci(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, f64::INFINITY));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, 1.96 * (var / n).sqrt()))
}
