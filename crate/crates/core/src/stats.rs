//! Small estimator toolkit: compensated sums, running moments, quantiles and
//! the Wilson score interval.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// 97.5% standard normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Neumaier-compensated accumulator. Folding the same values in the same
/// order always gives the same bits.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Scalar> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

pub fn compensated_sum<T: Scalar, I: IntoIterator<Item = T>>(xs: I) -> T {
    let mut acc = CompensatedSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMoments<T> {
    count: u64,
    mean: T,
    m2: T,
}

impl<T: Scalar> RunningMoments<T> {
    pub fn new() -> Self {
        Self {
            count: 0,
            mean: T::zero(),
            m2: T::zero(),
        }
    }

    pub fn push(&mut self, x: T) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / T::from_count(self.count);
        self.m2 += delta * (x - self.mean);
    }

    /// Folds another accumulator in (Chan et al. pairwise update).
    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n1 = T::from_count(self.count);
        let n2 = T::from_count(other.count);
        let n = n1 + n2;
        let delta = other.mean - self.mean;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two observations.
    pub fn variance(&self) -> T {
        if self.count < 2 {
            T::zero()
        } else {
            (self.m2 / T::from_count(self.count - 1)).max(T::zero())
        }
    }

    pub fn std_error(&self) -> T {
        if self.count == 0 {
            T::zero()
        } else {
            (self.variance() / T::from_count(self.count)).sqrt()
        }
    }
}

/// Mean and unbiased variance of a slice, using compensated sums.
pub fn mean_var<T: Scalar>(xs: &[T]) -> (T, T) {
    if xs.is_empty() {
        return (T::zero(), T::zero());
    }
    let n = T::from_count(xs.len() as u64);
    let mean = compensated_sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, T::zero());
    }
    let ss = compensated_sum(xs.iter().map(|&x| (x - mean) * (x - mean)));
    (mean, ss / (n - T::one()))
}

/// Linear-interpolation quantile (Hyndman–Fan type 7) of already sorted data.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: T) -> T {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let q = q.max(T::zero()).min(T::one());
    let h = q * T::from_count((sorted.len() - 1) as u64);
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0).min(sorted.len() - 1);
    if i + 1 >= sorted.len() {
        return sorted[i];
    }
    let frac = h - lo;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval<T: Scalar>(successes: u64, trials: u64, z: T) -> Interval<T> {
    if trials == 0 {
        return Interval {
            lo: T::zero(),
            hi: T::one(),
        };
    }
    let n = T::from_count(trials);
    let p = T::from_count(successes) / n;
    let z2 = z * z;
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let denom = T::one() + z2 / n;
    let centre = (p + z2 / (two * n)) / denom;
    let half = z * (p * (T::one() - p) / n + z2 / (four * n * n)).sqrt() / denom;
    let lo = if successes == 0 {
        T::zero()
    } else {
        (centre - half).max(T::zero())
    };
    let hi = if successes >= trials {
        T::one()
    } else {
        (centre + half).min(T::one())
    };
    Interval { lo, hi }
}

/// Bernoulli proportion with its binomial standard error and Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion<T> {
    pub p_hat: T,
    pub stderr: T,
    pub ci95: Interval<T>,
}

impl<T: Scalar> Proportion<T> {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        let n = T::from_count(trials.max(1));
        let p = T::from_count(successes) / n;
        Self {
            p_hat: p,
            stderr: (p * (T::one() - p) / n).sqrt(),
            ci95: wilson_interval(successes, trials, T::lit(Z_975)),
        }
    }
}
