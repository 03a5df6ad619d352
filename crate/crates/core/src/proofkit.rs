//! The (α, ε) subsequence apparatus behind the strong law for non-negative
//! sequences: the index with its geometric levels and mean bands, the κ_j
//! bound, the level-wise variance series, Chebyshev sums along the
//! subsequences, and the pathwise sandwich chain.
//!
//! Infinite sums are reported as a finite part plus an explicit geometric
//! tail bound, so every reported number is an upper bound.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conditions::{NormalizerSpec, SeriesReport};
use crate::error::{Error, Result};
use crate::exec::{map_blocks, map_indexed};
use crate::families::{SequenceFamily, Trajectory};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::stats::{Proportion, RunningMoments};

/// Absolute tolerance when checking the sandwich chain.
pub const SANDWICH_TOLERANCE: f64 = 1e-12;

/// Which cell extreme a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

/// Smallest and largest index in a non-empty cell `T_{level, band}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub k_min: u64,
    pub k_max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct SubsequenceIndex<T> {
    pub alpha: T,
    pub epsilon: T,
    /// Upper bound on `E S_n / b_n`.
    pub a: T,
    /// `horizon_max` when `A` was read off the mean path, else `supplied`.
    pub a_source: String,
    /// `⌊A/ε⌋`.
    pub l: u64,
    pub horizon: usize,
    /// Highest level, the least `M` with `α^M >= horizon`.
    pub max_level: u32,
    /// `m(n)` for `n = 1..=horizon`.
    pub m: Vec<u32>,
    /// `s(n)` for `n = 1..=horizon`.
    pub s: Vec<u64>,
    /// `E S_n` for `n = 1..=horizon`.
    pub mean_path: Vec<T>,
    /// `E S_n / b_n` for `n = 1..=horizon`.
    pub scaled_mean: Vec<T>,
    pub normalizer: NormalizerSpec<T>,
    /// Non-empty cells keyed by `(level, band)`.
    #[serde(with = "cell_map")]
    pub cells: BTreeMap<(u32, u64), Cell>,
}

mod cell_map {
    use super::Cell;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        level: u32,
        band: u64,
        k_min: u64,
        k_max: u64,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<(u32, u64), Cell>, s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = map
            .iter()
            .map(|(&(level, band), c)| Entry {
                level,
                band,
                k_min: c.k_min,
                k_max: c.k_max,
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(u32, u64), Cell>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries
            .into_iter()
            .map(|e| {
                (
                    (e.level, e.band),
                    Cell {
                        k_min: e.k_min,
                        k_max: e.k_max,
                    },
                )
            })
            .collect())
    }
}

/// `α^level`; the single definition of level boundaries used everywhere.
pub fn level_start<T: Scalar>(alpha: T, level: u32) -> T {
    alpha.powi(level as i32)
}

/// `⌊log_α n⌋`, exact with respect to [`level_start`].
pub fn level_of<T: Scalar>(alpha: T, n: u64) -> u32 {
    let nf = T::from_count(n);
    let guess = (nf.ln() / alpha.ln()).floor().to_u32().unwrap_or(0);
    let mut m = guess;
    while m > 0 && level_start(alpha, m) > nf {
        m -= 1;
    }
    while level_start(alpha, m + 1) <= nf {
        m += 1;
    }
    m
}

/// `⌊v/ε⌋`, nudged so that `ε·s <= v < ε·(s+1)` holds in floating point.
fn band_of<T: Scalar>(v: T, epsilon: T) -> u64 {
    let mut s = (v / epsilon).floor().to_u64().unwrap_or(0);
    while s > 0 && epsilon * T::from_count(s) > v {
        s -= 1;
    }
    while epsilon * T::from_count(s + 1) <= v {
        s += 1;
    }
    s
}

/// Builds the index from `n ↦ E S_n` up to `horizon`.
///
/// `A` is the maximum of `E S_n / b_n` over the horizon unless `a_sup` is
/// given, in which case every scaled mean must stay at or below it.
pub fn build_index<T, F>(
    mean_path: F,
    alpha: T,
    epsilon: T,
    horizon: usize,
    normalizer: &NormalizerSpec<T>,
    a_sup: Option<T>,
) -> Result<SubsequenceIndex<T>>
where
    T: Scalar,
    F: Fn(u64) -> T,
{
    if !(alpha > T::one()) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must exceed 1, got {alpha}")));
    }
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let b = normalizer.values(horizon)?;
    let mut path = Vec::with_capacity(horizon);
    let mut scaled = Vec::with_capacity(horizon);
    for n in 1..=horizon as u64 {
        let es = mean_path(n);
        let v = es / b[n as usize - 1];
        if !v.is_finite() {
            return Err(Error::NonfiniteMean(n));
        }
        if v < T::zero() {
            return Err(Error::InvalidArgument(format!(
                "scaled mean E S_n / b_n = {v} at n = {n} is negative"
            )));
        }
        path.push(es);
        scaled.push(v);
    }
    let observed_max = scaled.iter().fold(T::zero(), |m, &v| m.max(v));
    let (a, a_source) = match a_sup {
        Some(a) => {
            if !(a >= T::zero()) || !a.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "A must be finite and non-negative, got {a}"
                )));
            }
            (a, "supplied")
        }
        None => (observed_max, "horizon_max"),
    };
    let l = band_of(a, epsilon);
    let ceiling = epsilon * T::from_count(l + 1);
    for (k, &v) in scaled.iter().enumerate() {
        if v > a || v >= ceiling {
            return Err(Error::SupExceeded {
                n: k as u64 + 1,
                ratio: v.as_f64(),
                ceiling: a.min(ceiling).as_f64(),
            });
        }
    }
    let mut m = Vec::with_capacity(horizon);
    let mut s = Vec::with_capacity(horizon);
    let mut cells: BTreeMap<(u32, u64), Cell> = BTreeMap::new();
    for n in 1..=horizon as u64 {
        let level = level_of(alpha, n);
        let band = band_of(scaled[n as usize - 1], epsilon);
        m.push(level);
        s.push(band);
        cells
            .entry((level, band))
            .and_modify(|c| {
                c.k_min = c.k_min.min(n);
                c.k_max = c.k_max.max(n);
            })
            .or_insert(Cell { k_min: n, k_max: n });
    }
    let mut max_level = 0u32;
    while level_start(alpha, max_level) < T::from_count(horizon as u64) {
        max_level += 1;
    }
    Ok(SubsequenceIndex {
        alpha,
        epsilon,
        a,
        a_source: a_source.into(),
        l,
        horizon,
        max_level,
        m,
        s,
        mean_path: path,
        scaled_mean: scaled,
        normalizer: normalizer.clone(),
        cells,
    })
}

/// [`build_index`] on a family's analytic mean path.
pub fn build_index_for_family<T: Scalar>(
    family: &SequenceFamily<T>,
    alpha: T,
    epsilon: T,
    horizon: usize,
    normalizer: &NormalizerSpec<T>,
) -> Result<SubsequenceIndex<T>> {
    let m = family.require_moments()?;
    let path = m.mean_sum_path(horizon);
    build_index(|n| path[n as usize - 1], alpha, epsilon, horizon, normalizer, None)
}

impl<T: Scalar> SubsequenceIndex<T> {
    pub fn m_of(&self, n: u64) -> u32 {
        self.m[n as usize - 1]
    }

    pub fn s_of(&self, n: u64) -> u64 {
        self.s[n as usize - 1]
    }

    pub fn mean_sum(&self, n: u64) -> T {
        self.mean_path[n as usize - 1]
    }

    /// `⌊α^level⌋`, the value used for empty cells.
    pub fn fallback(&self, level: u32) -> u64 {
        level_start(self.alpha, level).floor().to_u64().unwrap_or(u64::MAX)
    }

    pub fn cell(&self, level: u32, band: u64) -> Option<Cell> {
        self.cells.get(&(level, band)).copied()
    }

    pub fn k_plus(&self, level: u32, band: u64) -> u64 {
        self.cell(level, band).map_or_else(|| self.fallback(level), |c| c.k_max)
    }

    pub fn k_minus(&self, level: u32, band: u64) -> u64 {
        self.cell(level, band).map_or_else(|| self.fallback(level), |c| c.k_min)
    }

    pub fn k(&self, level: u32, band: u64, sign: Sign) -> u64 {
        match sign {
            Sign::Plus => self.k_plus(level, band),
            Sign::Minus => self.k_minus(level, band),
        }
    }

    /// Highest level whose index range `[α^n, α^{n+1})` lies inside the horizon.
    pub fn last_complete_level(&self) -> Option<u32> {
        let h = T::from_count(self.horizon as u64 + 1);
        let mut level = None;
        let mut n = 0u32;
        while level_start(self.alpha, n + 1) <= h {
            level = Some(n);
            n += 1;
        }
        level
    }

    /// Levels whose first index is inside the horizon.
    pub fn observed_levels(&self) -> std::ops::RangeInclusive<u32> {
        0..=self.m_of(self.horizon as u64)
    }

    /// First violated index invariant, if any. Used by tests and the CLI.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let eps = self.epsilon;
        for n in 1..=self.horizon as u64 {
            let nf = T::from_count(n);
            let (m, s) = (self.m_of(n), self.s_of(n));
            if !(level_start(self.alpha, m) <= nf && nf < level_start(self.alpha, m + 1)) {
                return Err(format!("n = {n}: level {m} does not bracket n"));
            }
            let v = self.scaled_mean[n as usize - 1];
            if !(eps * T::from_count(s) <= v && v < eps * T::from_count(s + 1)) {
                return Err(format!("n = {n}: scaled mean {v} outside band {s}"));
            }
            if s > self.l {
                return Err(format!("n = {n}: band {s} above L = {}", self.l));
            }
            let Some(cell) = self.cell(m, s) else {
                return Err(format!("n = {n}: own cell ({m}, {s}) is empty"));
            };
            let (lo, hi) = (self.k_minus(m, s), self.k_plus(m, s));
            if !(lo <= n && n <= hi) || (cell.k_min, cell.k_max) != (lo, hi) {
                return Err(format!("n = {n}: not inside [{lo}, {hi}]"));
            }
            for k in [lo, hi] {
                let dv = (self.scaled_mean[k as usize - 1] - v).abs();
                if dv > eps {
                    return Err(format!("n = {n}: scaled means at {k} and {n} differ by {dv} > ε"));
                }
            }
        }
        for (&(level, band), cell) in &self.cells {
            let floor = self.fallback(level);
            if cell.k_min < floor || cell.k_max < floor {
                return Err(format!("cell ({level}, {band}) extends below ⌊α^n⌋ = {floor}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaRecord<T> {
    pub j: u64,
    /// `max(κ_j⁺, κ_j⁻)`.
    pub kappa_j: T,
    pub kappa_plus: T,
    pub kappa_minus: T,
    /// Geometric bound on the unobserved levels, included in both κ values.
    pub tail_bound: T,
    /// `4α⁴ / ((α² − 1) j²)`.
    pub bound: T,
    pub holds: bool,
}

/// `κ_j = Σ_{levels n: k(n,s) >= j} 1/k(n,s)²` for `j = 1..=j_max`.
///
/// Levels inside the horizon contribute their actual cell extremes; all
/// later levels are covered by `Σ 4α^{-2n}` (from `⌊x⌋ >= x/2`), summed from
/// the first level that can contain an index `>= j`.
pub fn kappa_report<T: Scalar>(index: &SubsequenceIndex<T>, s: u64, j_max: u64) -> Result<Vec<KappaRecord<T>>> {
    if s > index.l {
        return Err(Error::InvalidArgument(format!("band {s} outside 0..={}", index.l)));
    }
    let alpha = index.alpha;
    let a2 = alpha * alpha;
    let complete = index.last_complete_level();
    let first_open = complete.map_or(0, |c| c + 1);
    let levels: Vec<(u64, u64)> = match complete {
        Some(c) => (0..=c).map(|n| (index.k_plus(n, s), index.k_minus(n, s))).collect(),
        None => Vec::new(),
    };
    let four = T::lit(4.0);
    let mut out = Vec::with_capacity(j_max as usize);
    for j in 1..=j_max {
        let jf = T::from_count(j);
        let mut plus = T::zero();
        let mut minus = T::zero();
        // Ascending so that small terms are added first would need a reverse;
        // terms shrink geometrically, so add from the top level down.
        for &(kp, km) in levels.iter().rev() {
            if kp >= j {
                let k = T::from_count(kp);
                plus += T::one() / (k * k);
            }
            if km >= j {
                let k = T::from_count(km);
                minus += T::one() / (k * k);
            }
        }
        // Least n with α^{n+1} > j: only such levels can hold an index >= j.
        let mut n_star = 0u32;
        while level_start(alpha, n_star + 1) <= jf {
            n_star += 1;
        }
        let start = first_open.max(n_star);
        let tail_bound = four * level_start(a2, start).recip() / (T::one() - a2.recip());
        let kappa_plus = plus + tail_bound;
        let kappa_minus = minus + tail_bound;
        let kappa_j = kappa_plus.max(kappa_minus);
        let bound = four * a2 * a2 / ((a2 - T::one()) * jf * jf);
        out.push(KappaRecord {
            j,
            kappa_j,
            kappa_plus,
            kappa_minus,
            tail_bound,
            bound,
            holds: kappa_j <= bound,
        });
    }
    Ok(out)
}

/// Level-wise bound `c·Σ_{j<=k} V(X_j) / k²` with `k = k(n, s)±`, one term
/// per observed level, judged with the summability rule.
pub fn subsequence_variance_series<T, F>(
    index: &SubsequenceIndex<T>,
    var_fn: F,
    sign: Sign,
    s: u64,
    c: T,
) -> Result<SeriesReport<T>>
where
    T: Scalar,
    F: Fn(u64) -> T,
{
    if s > index.l {
        return Err(Error::InvalidArgument(format!("band {s} outside 0..={}", index.l)));
    }
    if !(c > T::zero()) {
        return Err(Error::InvalidArgument(format!("c must be positive, got {c}")));
    }
    let ks: Vec<u64> = index.observed_levels().map(|n| index.k(n, s, sign)).collect();
    let k_top = ks.iter().copied().max().unwrap_or(1);
    let mut cumulative = Vec::with_capacity(k_top as usize);
    let mut acc = T::zero();
    for j in 1..=k_top {
        let v = var_fn(j);
        if v < T::zero() || v.is_nan() {
            return Err(Error::NegativeVariance {
                n: j,
                value: v.as_f64(),
            });
        }
        acc += v;
        cumulative.push(acc);
    }
    let terms = ks
        .iter()
        .map(|&k| {
            let kf = T::from_count(k);
            c * cumulative[k as usize - 1] / (kf * kf)
        })
        .collect();
    Ok(SeriesReport::summability(terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevLevel<T> {
    pub level: u32,
    pub sign: Sign,
    pub k: u64,
    /// `P̂(|S_k − E S_k| > k·δ)`.
    pub p_hat: T,
    pub stderr: T,
    /// `V(S_k) / (k²δ²)`.
    pub bound: T,
    pub variance: T,
    pub holds_within_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevReport<T> {
    pub delta: T,
    pub band: u64,
    pub replications: u64,
    /// `analytic` when `V(S_k)` came from the covariance structure.
    pub variance_source: String,
    /// Level-major, `plus` before `minus`.
    pub levels: Vec<ChebyshevLevel<T>>,
    /// Running sums of bounds over levels, per sign.
    pub partial_sum_plus: Vec<T>,
    pub partial_sum_minus: Vec<T>,
}

/// Chebyshev bounds along `k(n, s)±` against Monte Carlo deviation
/// frequencies. All subsequence indices share one set of trajectories.
pub fn chebyshev_report<T: Scalar>(
    family: &SequenceFamily<T>,
    index: &SubsequenceIndex<T>,
    s: u64,
    delta: T,
    replications: u64,
    seed: u64,
) -> Result<ChebyshevReport<T>> {
    if !(delta > T::zero()) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if s > index.l {
        return Err(Error::InvalidArgument(format!("band {s} outside 0..={}", index.l)));
    }
    if replications < crate::conditions::MIN_REPLICATIONS {
        return Err(Error::InsufficientReplications {
            min: crate::conditions::MIN_REPLICATIONS,
            got: replications,
        });
    }
    let mut targets: Vec<(u32, Sign, u64)> = Vec::new();
    for level in index.observed_levels() {
        for sign in [Sign::Plus, Sign::Minus] {
            targets.push((level, sign, index.k(level, s, sign)));
        }
    }
    let mut ks: Vec<u64> = targets.iter().map(|t| t.2).collect();
    ks.sort_unstable();
    ks.dedup();
    let k_top = *ks.last().unwrap() as usize;
    family.validate_horizon(k_top)?;
    let analytic: Option<Vec<T>> = family
        .moments()
        .and_then(|m| ks.iter().map(|&k| m.sum_variance(k)).collect());
    let centres: Vec<T> = ks.iter().map(|&k| index.mean_sum(k)).collect();
    let thresholds: Vec<T> = ks.iter().map(|&k| T::from_count(k) * delta).collect();

    struct Block<T> {
        hits: Vec<u64>,
        moments: Vec<RunningMoments<T>>,
    }
    let parts = map_blocks(replications, |range| {
        let mut block = Block {
            hits: vec![0; ks.len()],
            moments: vec![RunningMoments::new(); ks.len()],
        };
        let mut buf = Vec::with_capacity(k_top);
        for r in range {
            family.fill_values(derive_seed(seed, r), k_top, None, &mut buf);
            let mut sum = T::zero();
            let mut next = 0;
            for (i, &x) in buf.iter().enumerate() {
                sum += x;
                while next < ks.len() && ks[next] as usize == i + 1 {
                    let dev = sum - centres[next];
                    block.hits[next] += (dev.abs() > thresholds[next]) as u64;
                    block.moments[next].push(sum);
                    next += 1;
                }
            }
        }
        block
    });
    let mut hits = vec![0u64; ks.len()];
    let mut moments = vec![RunningMoments::new(); ks.len()];
    for p in &parts {
        for i in 0..ks.len() {
            hits[i] += p.hits[i];
            moments[i].merge(&p.moments[i]);
        }
    }
    let variances: Vec<T> = match &analytic {
        Some(v) => v.clone(),
        None => moments.iter().map(|m| m.variance()).collect(),
    };
    let mut levels = Vec::with_capacity(targets.len());
    let mut partial_sum_plus = Vec::new();
    let mut partial_sum_minus = Vec::new();
    let (mut acc_p, mut acc_m) = (T::zero(), T::zero());
    for (level, sign, k) in targets {
        let i = ks.binary_search(&k).unwrap();
        let prop: Proportion<T> = Proportion::from_counts(hits[i], replications);
        let kd = T::from_count(k) * delta;
        let bound = variances[i] / (kd * kd);
        match sign {
            Sign::Plus => {
                acc_p += bound;
                partial_sum_plus.push(acc_p);
            }
            Sign::Minus => {
                acc_m += bound;
                partial_sum_minus.push(acc_m);
            }
        }
        levels.push(ChebyshevLevel {
            level,
            sign,
            k,
            p_hat: prop.p_hat,
            stderr: prop.stderr,
            bound,
            variance: variances[i],
            holds_within_noise: prop.p_hat <= bound + T::lit(4.0) * prop.stderr,
        });
    }
    Ok(ChebyshevReport {
        delta,
        band: s,
        replications,
        variance_source: if analytic.is_some() { "analytic" } else { "sample" }.into(),
        levels,
        partial_sum_plus,
        partial_sum_minus,
    })
}

/// The five expressions of the chain at one `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichRecord<T> {
    pub n: u64,
    pub k_minus: u64,
    pub k_plus: u64,
    pub lower: T,
    pub mid_lo: T,
    pub mid: T,
    pub mid_hi: T,
    pub upper: T,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichViolation {
    pub n: u64,
    /// `lower<=mid_lo`, `mid_lo<=mid`, `mid<=mid_hi` or `mid_hi<=upper`.
    pub which: String,
    /// Left side minus right side (positive means violated).
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport<T> {
    pub seed: u64,
    pub alpha: T,
    pub epsilon: T,
    /// The bound on `E S_{k⁺}/k⁺` entering both outer expressions. The chain
    /// names this constant separately; it is the scaled-mean supremum `A`.
    pub a: T,
    pub bound_symbol: String,
    pub records: Vec<SandwichRecord<T>>,
    pub violations: Vec<SandwichViolation>,
    /// Largest left-minus-right over all four inequalities and all `n`.
    pub max_residual: T,
    pub tolerance: f64,
}

/// `(1 − 1/α)·A + ε` and `(α − 1)·A + ε`, the constant parts of the two
/// outer expressions.
pub fn outer_slacks<T: Scalar>(alpha: T, epsilon: T, a: T) -> (T, T) {
    (
        (T::one() - alpha.recip()) * a + epsilon,
        (alpha - T::one()) * a + epsilon,
    )
}

/// Evaluates
/// `lower <= mid_lo <= mid <= mid_hi <= upper` with
///
/// ```text
/// lower  = −ε − (1 − 1/α)A + (S_{k⁻} − E S_{k⁻})/(α k⁻)
/// mid_lo = S_{k⁻}/n − E S_n/n
/// mid    = (S_n − E S_n)/n
/// mid_hi = S_{k⁺}/n − E S_{k⁺}/k⁺ + ε
/// upper  = α(S_{k⁺} − E S_{k⁺})/k⁺ + (α − 1)A + ε
/// ```
///
/// at every `n` up to the index horizon, with `k± = k(m(n), s(n))±`.
pub fn sandwich_check<T: Scalar>(trajectory: &Trajectory<T>, index: &SubsequenceIndex<T>) -> Result<SandwichReport<T>> {
    if !index.normalizer.is_linear() {
        return Err(Error::InvalidArgument(
            "the sandwich chain needs the linear normalizer b_n = n".into(),
        ));
    }
    if trajectory.horizon() < index.horizon {
        return Err(Error::HorizonMismatch {
            trajectory: trajectory.horizon(),
            index: index.horizon,
        });
    }
    if let Some((k, &x)) = trajectory.values[..index.horizon]
        .iter()
        .enumerate()
        .find(|(_, x)| **x < T::zero())
    {
        return Err(Error::NegativityDetected {
            n: k as u64 + 1,
            value: x.as_f64(),
        });
    }
    let alpha = index.alpha;
    let eps = index.epsilon;
    let a = index.a;
    let (lower_slack, upper_slack) = outer_slacks(alpha, eps, a);
    let tol = T::lit(SANDWICH_TOLERANCE);
    let mut records = Vec::with_capacity(index.horizon);
    let mut violations = Vec::new();
    let mut max_residual = T::neg_infinity();
    for n in 1..=index.horizon as u64 {
        let (m, s) = (index.m_of(n), index.s_of(n));
        let (km, kp) = (index.k_minus(m, s), index.k_plus(m, s));
        let nf = T::from_count(n);
        let (kmf, kpf) = (T::from_count(km), T::from_count(kp));
        let (sn, skm, skp) = (
            trajectory.s(n as usize),
            trajectory.s(km as usize),
            trajectory.s(kp as usize),
        );
        let (en, ekm, ekp) = (index.mean_sum(n), index.mean_sum(km), index.mean_sum(kp));
        let lower = -lower_slack + (skm - ekm) / (alpha * kmf);
        let mid_lo = skm / nf - en / nf;
        let mid = (sn - en) / nf;
        let mid_hi = skp / nf - ekp / kpf + eps;
        let upper = alpha * (skp - ekp) / kpf + upper_slack;
        let chain = [
            ("lower<=mid_lo", lower, mid_lo),
            ("mid_lo<=mid", mid_lo, mid),
            ("mid<=mid_hi", mid, mid_hi),
            ("mid_hi<=upper", mid_hi, upper),
        ];
        let mut violated = false;
        for (which, left, right) in chain {
            let residual = left - right;
            max_residual = max_residual.max(residual);
            if residual > tol || residual.is_nan() {
                violated = true;
                violations.push(SandwichViolation {
                    n,
                    which: which.into(),
                    residual: residual.as_f64(),
                });
            }
        }
        records.push(SandwichRecord {
            n,
            k_minus: km,
            k_plus: kp,
            lower,
            mid_lo,
            mid,
            mid_hi,
            upper,
            violated,
        });
    }
    Ok(SandwichReport {
        seed: trajectory.seed,
        alpha,
        epsilon: eps,
        a,
        bound_symbol: "A = max E S_n / n".into(),
        records,
        violations,
        max_residual,
        tolerance: SANDWICH_TOLERANCE,
    })
}

/// [`sandwich_check`] for several seeds in parallel, in seed order.
pub fn sandwich_suite<T: Scalar>(
    family: &SequenceFamily<T>,
    index: &SubsequenceIndex<T>,
    seeds: &[u64],
) -> Result<Vec<SandwichReport<T>>> {
    map_indexed(seeds.len() as u64, |i| {
        let t = family.sample_trajectory(index.horizon, seeds[i as usize])?;
        sandwich_check(&t, index)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::Verdict;
    use crate::families::{make_family, FamilyDescriptor};
    use proptest::prelude::*;

    fn fam(d: FamilyDescriptor) -> SequenceFamily<f64> {
        make_family(&d).unwrap()
    }

    fn linear() -> NormalizerSpec<f64> {
        NormalizerSpec::Linear
    }

    #[test]
    fn constant_mean_path_band() {
        let idx = build_index(|n| n as f64, 2.0, 0.5, 1000, &linear(), None).unwrap();
        assert_eq!(idx.a, 1.0);
        assert_eq!(idx.l, 2);
        assert!(idx.s.iter().all(|&s| s == 2));
        idx.check_invariants().unwrap();
    }

    #[test]
    fn level_examples() {
        assert_eq!(level_of(2.0f64, 5), 2);
        assert_eq!(level_of(2.0f64, 4), 2);
        assert_eq!(level_of(2.0f64, 8), 3);
        assert_eq!(level_of(2.0f64, 1), 0);
        assert_eq!(level_of(1.5f64, 2), 1);
        assert_eq!(level_of(1.5f64, 3), 2);
        for n in 1..5000u64 {
            for alpha in [1.1f64, 1.5, 2.0, 3.0, 4.0] {
                let m = level_of(alpha, n);
                assert!(alpha.powi(m as i32) <= n as f64 && (n as f64) < alpha.powi(m as i32 + 1));
            }
        }
    }

    #[test]
    fn sup_exceeded_when_a_underestimated() {
        let r = build_index(|n| n as f64, 2.0, 0.5, 100, &linear(), Some(0.9));
        assert!(matches!(r, Err(Error::SupExceeded { n: 1, .. })));
        let r = build_index(
            |n| if n == 7 { f64::NAN } else { n as f64 },
            2.0,
            0.5,
            100,
            &linear(),
            None,
        );
        assert!(matches!(r, Err(Error::NonfiniteMean(7))));
        assert!(build_index(|n| n as f64, 1.0, 0.5, 100, &linear(), None).is_err());
        assert!(build_index(|n| n as f64, 2.0, 0.0, 100, &linear(), None).is_err());
    }

    #[test]
    fn invariants_on_family_grid() {
        for d in [
            FamilyDescriptor::shifted_cosine(),
            FamilyDescriptor::exponential(1.0),
            FamilyDescriptor::step(),
        ] {
            let f = fam(d);
            for alpha in [1.5, 2.0, 4.0] {
                for eps in [0.1, 0.5] {
                    let idx = build_index_for_family(&f, alpha, eps, 3000, &linear()).unwrap();
                    idx.check_invariants().unwrap();
                }
            }
        }
    }

    #[test]
    fn varying_mean_path_populates_many_bands() {
        // E S_n / n = 1 + sin(n)/2 spreads indices over bands 2..=5 at ε = 0.25.
        let idx = build_index(
            |n| n as f64 * (1.0 + (n as f64).sin() / 2.0),
            2.0,
            0.25,
            2000,
            &linear(),
            None,
        )
        .unwrap();
        idx.check_invariants().unwrap();
        let bands: std::collections::BTreeSet<u64> = idx.s.iter().copied().collect();
        assert!(bands.len() >= 3, "{bands:?}");
        // Some (level, band) cells are empty and use the fallback.
        assert_eq!(idx.k_plus(0, 0), 1);
        assert!(idx.cell(0, 0).is_none());
    }

    #[test]
    fn kappa_example_alpha_two() {
        let idx = build_index(|n| n as f64, 2.0, 0.5, 1 << 12, &linear(), None).unwrap();
        let r = kappa_report(&idx, 2, 1000).unwrap();
        let first = r[0];
        assert!((first.bound - 64.0 / 3.0).abs() < 1e-12);
        // Full cells: k⁺ = 2^{n+1} − 1 and k⁻ = 2^n; κ₁⁻ ≈ Σ 4^{-n} = 4/3.
        assert!(
            first.kappa_minus > 1.33 && first.kappa_minus < 1.34,
            "{}",
            first.kappa_minus
        );
        assert!(r.iter().all(|x| x.holds));
    }

    #[test]
    fn kappa_beyond_cells_is_tail_only() {
        let idx = build_index(|n| n as f64, 2.0, 0.5, 100, &linear(), None).unwrap();
        let r = kappa_report(&idx, 2, 500).unwrap();
        let last = r.last().unwrap();
        assert_eq!(last.kappa_plus, last.tail_bound);
        assert_eq!(last.kappa_minus, last.tail_bound);
        assert!(last.holds);
    }

    #[test]
    fn kappa_holds_on_grid() {
        for alpha in [1.5, 2.0, 4.0] {
            for horizon in [10usize, 1000, 100_000] {
                let idx = build_index(|n| n as f64 * 1.25, alpha, 0.5, horizon, &linear(), None).unwrap();
                for s in 0..=idx.l {
                    let r = kappa_report(&idx, s, 1000).unwrap();
                    assert!(r.iter().all(|x| x.holds), "alpha {alpha} horizon {horizon} s {s}");
                }
            }
        }
    }

    #[test]
    fn kappa_direct_summation_oracle() {
        // Independent route for full cells at α = 2: k⁻ = 2^n exactly.
        let idx = build_index(|n| n as f64, 2.0, 0.5, (1 << 16) - 1, &linear(), None).unwrap();
        let r = kappa_report(&idx, 2, 1).unwrap();
        let direct: f64 = (0..60).map(|n| 1.0 / 4f64.powi(n)).sum();
        // Finite part exact; the tail bound replaces Σ_{n>=16} 4^{-n} by 4·that.
        let excess = 3.0 * (16..60).map(|n| 1.0 / 4f64.powi(n)).sum::<f64>();
        assert!((r[0].kappa_minus - direct - excess).abs() < 1e-12);
    }

    #[test]
    fn variance_series_examples() {
        let idx = build_index(|n| n as f64, 2.0, 0.5, 1 << 14, &linear(), None).unwrap();
        let ones = subsequence_variance_series(&idx, |_| 1.0, Sign::Plus, 2, 1.0).unwrap();
        for (n, &t) in ones.terms.iter().enumerate() {
            let k = idx.k_plus(n as u32, 2) as f64;
            assert!((t - 1.0 / k).abs() < 1e-15);
        }
        assert_eq!(ones.verdict, Verdict::ConvergesEvidence);
        let zero = subsequence_variance_series(&idx, |_| 0.0, Sign::Minus, 2, 1.0).unwrap();
        assert!(zero.terms.iter().all(|&t| t == 0.0));
        let step = subsequence_variance_series(&idx, |n| (n * n) as f64 / 4.0, Sign::Plus, 2, 1.0).unwrap();
        assert_eq!(step.verdict, Verdict::DivergesEvidence);
        for (n, &t) in step.terms.iter().enumerate() {
            let k = idx.k_plus(n as u32, 2) as f64;
            let direct: f64 = (1..=k as u64).map(|j| (j * j) as f64 / 4.0).sum::<f64>() / (k * k);
            assert!((t - direct).abs() <= 1e-12 * direct.max(1.0));
        }
        assert!(matches!(
            subsequence_variance_series(&idx, |_| -1.0, Sign::Plus, 2, 1.0),
            Err(Error::NegativeVariance { .. })
        ));
    }

    #[test]
    fn chebyshev_cosine_bounds() {
        let f = fam(FamilyDescriptor::shifted_cosine());
        let idx = build_index_for_family(&f, 2.0, 0.25, 4096, &linear()).unwrap();
        let s = idx.s_of(1);
        let r = chebyshev_report(&f, &idx, s, 0.1, 2000, 17).unwrap();
        assert_eq!(r.variance_source, "analytic");
        for lv in &r.levels {
            let k = lv.k as f64;
            assert!((lv.bound - 1.0 / (2.0 * k * 0.01)).abs() < 1e-9 * lv.bound);
            assert!(lv.holds_within_noise, "{lv:?}");
        }
        let last = *r.partial_sum_plus.last().unwrap();
        assert!(last < 100.0 * 2.0 + 1e-9);
    }

    #[test]
    fn chebyshev_huge_delta_gives_zero() {
        let f = fam(FamilyDescriptor::shifted_cosine());
        let idx = build_index_for_family(&f, 2.0, 0.25, 1024, &linear()).unwrap();
        let r = chebyshev_report(&f, &idx, idx.s_of(1), 1e6, 200, 1).unwrap();
        assert!(r.levels.iter().all(|l| l.p_hat == 0.0));
    }

    #[test]
    fn sandwich_constant_family_slack() {
        let f = fam(FamilyDescriptor::constant(1.0));
        let idx = build_index_for_family(&f, 2.0, 0.25, 2000, &linear()).unwrap();
        let t = f.sample_trajectory(2000, 0).unwrap();
        let r = sandwich_check(&t, &idx).unwrap();
        assert!(r.violations.is_empty());
        for rec in &r.records {
            assert_eq!(rec.mid, 0.0);
            assert!(rec.upper - rec.mid >= 0.25 - 1e-12);
            assert!(rec.mid - rec.lower >= 0.25 - 1e-12);
        }
    }

    #[test]
    fn sandwich_shifted_cosine_no_violations() {
        let f = fam(FamilyDescriptor::shifted_cosine());
        for alpha in [1.5, 2.0, 4.0] {
            for eps in [0.1, 0.25, 0.5] {
                let idx = build_index_for_family(&f, alpha, eps, 10_000, &linear()).unwrap();
                let seeds: Vec<u64> = (0..3).collect();
                for r in sandwich_suite(&f, &idx, &seeds).unwrap() {
                    assert!(
                        r.violations.is_empty(),
                        "alpha {alpha} eps {eps}: {:?}",
                        &r.violations[..1]
                    );
                }
            }
        }
    }

    #[test]
    fn sandwich_detects_a_broken_chain() {
        // Shrinking a cell so that k⁺ < n breaks mid <= mid_hi.
        let f = fam(FamilyDescriptor::constant(1.0));
        let mut idx = build_index_for_family(&f, 2.0, 0.25, 100, &linear()).unwrap();
        let band = idx.s_of(15);
        idx.cells.insert((3, band), Cell { k_min: 8, k_max: 8 });
        let t = f.sample_trajectory(100, 0).unwrap();
        let r = sandwich_check(&t, &idx).unwrap();
        assert!(r.violations.iter().any(|v| v.n == 15 && v.which == "mid<=mid_hi"));
        assert!(r.max_residual > 0.2);
        // Negative values are rejected outright.
        let g = fam(FamilyDescriptor::cosine());
        let t = g.sample_trajectory(500, 3).unwrap();
        let idx = build_index(|n| n as f64, 2.0, 0.5, 500, &linear(), None).unwrap();
        assert!(matches!(
            sandwich_check(&t, &idx),
            Err(Error::NegativityDetected { .. })
        ));
    }

    #[test]
    fn sandwich_horizon_mismatch() {
        let f = fam(FamilyDescriptor::constant(1.0));
        let idx = build_index_for_family(&f, 2.0, 0.25, 100, &linear()).unwrap();
        let t = f.sample_trajectory(50, 0).unwrap();
        assert!(matches!(
            sandwich_check(&t, &idx),
            Err(Error::HorizonMismatch {
                trajectory: 50,
                index: 100
            })
        ));
    }

    #[test]
    fn outer_slacks_shrink() {
        let a = 1.0;
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for m in 1..=5 {
            for k in 1..=5 {
                let (lo, hi) = outer_slacks(1.0 + 1.0 / m as f64, 1.0 / k as f64, a);
                if k > 1 {
                    assert!(lo < prev.0 && hi < prev.1);
                }
                prev = (lo, hi);
            }
            prev = (f64::INFINITY, f64::INFINITY);
        }
    }

    #[test]
    fn index_serializes() {
        let idx = build_index(|n| n as f64, 2.0, 0.5, 50, &linear(), None).unwrap();
        let text = serde_json::to_string(&idx).unwrap();
        let back: SubsequenceIndex<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, idx);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn nonnegative_paths_have_monotone_sums(seed in any::<u64>()) {
            let f = fam(FamilyDescriptor::shifted_cosine());
            let t = f.sample_trajectory(500, seed).unwrap();
            for n in 1..500 {
                prop_assert!(t.s(n) <= t.s(n + 1));
            }
        }

        #[test]
        fn index_invariants_random_paths(
            alpha in 1.05f64..5.0,
            eps in 0.01f64..1.0,
            amp in 0.0f64..3.0,
            freq in 0.0f64..2.0,
        ) {
            let idx = build_index(
                |n| n as f64 * (1.5 + amp * 0.5 * (freq * n as f64).sin()).max(0.0),
                alpha, eps, 600, &NormalizerSpec::Linear, None,
            ).unwrap();
            prop_assert!(idx.check_invariants().is_ok(), "{:?}", idx.check_invariants());
        }

        #[test]
        fn sandwich_holds_for_exponential_paths(seed in any::<u64>(), alpha in 1.1f64..4.0, eps in 0.05f64..0.6) {
            let f = fam(FamilyDescriptor::exponential(1.0));
            let idx = build_index_for_family(&f, alpha, eps, 800, &NormalizerSpec::Linear).unwrap();
            let t = f.sample_trajectory(800, seed).unwrap();
            let r = sandwich_check(&t, &idx).unwrap();
            prop_assert!(r.violations.is_empty());
        }
    }
}
