//! Numeric checks for the hypotheses of the strong-law theorems: the
//! variance series, quasi-uncorrelation, the scaled-mean supremum, the
//! uniform tail integral, the mean absolute deviation rate and the
//! truncation diagnostics.
//!
//! Every verdict here is finite-horizon evidence, never a proof.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_blocks, map_indexed};
use crate::families::SequenceFamily;
use crate::quadrature::integrate_1d;
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::stats::{CompensatedSum, RunningMoments};

/// Exponent `p` in the weighted-term test `terms[n]·n^p`.
pub const VERDICT_EXPONENT: f64 = 1.1;
/// Terms whose minimum over the last half stays above this are non-vanishing.
pub const DIVERGENCE_THRESHOLD: f64 = 1e-6;
/// Relative slack when comparing quarter maxima.
pub const BOUNDED_SLACK: f64 = 1e-9;
/// Boundedness factor for the mean absolute deviation rate.
pub const MAD_FACTOR: f64 = 10.0;
/// Fewest replications accepted by the sampling checkers.
pub const MIN_REPLICATIONS: u64 = 100;

/// Norming sequence `b_n`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[serde(bound(deserialize = "T: Scalar"))]
pub enum NormalizerSpec<T> {
    /// `b_n = n`.
    #[default]
    Linear,
    /// `b_n = n^p`.
    Power { p: T },
    /// `b_1, b_2, ...` given explicitly; only defined up to its length.
    Explicit { values: Vec<T> },
}

impl<T: Scalar> NormalizerSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            NormalizerSpec::Linear => Ok(()),
            NormalizerSpec::Power { p } => {
                if *p > T::zero() && p.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Normalizer(format!("power exponent must be positive, got {p}")))
                }
            }
            NormalizerSpec::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::Normalizer("explicit normalizer is empty".into()));
                }
                let mut prev = T::zero();
                for (k, &b) in values.iter().enumerate() {
                    if !(b > T::zero()) || !b.is_finite() {
                        return Err(Error::Normalizer(format!("b_{} = {b} is not positive", k + 1)));
                    }
                    if b < prev {
                        return Err(Error::Normalizer(format!("b_{} = {b} decreases", k + 1)));
                    }
                    prev = b;
                }
                Ok(())
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, NormalizerSpec::Linear)
    }

    /// True for explicit arrays, whose growth beyond their length is unknown.
    pub fn is_horizon_limited(&self) -> bool {
        matches!(self, NormalizerSpec::Explicit { .. })
    }

    /// `b_n` for `n >= 1`.
    pub fn b(&self, n: u64) -> Result<T> {
        if n == 0 {
            return Err(Error::Normalizer("b_n is indexed from n = 1".into()));
        }
        match self {
            NormalizerSpec::Linear => Ok(T::from_count(n)),
            NormalizerSpec::Power { p } => Ok(T::from_count(n).powf(*p)),
            NormalizerSpec::Explicit { values } => values.get(n as usize - 1).copied().ok_or_else(|| {
                Error::Normalizer(format!(
                    "explicit normalizer has {} values, b_{n} requested",
                    values.len()
                ))
            }),
        }
    }

    /// `b_1..b_horizon`, validated.
    pub fn values(&self, horizon: usize) -> Result<Vec<T>> {
        self.validate()?;
        (1..=horizon as u64).map(|n| self.b(n)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConvergesEvidence,
    DivergesEvidence,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::ConvergesEvidence => "converges_evidence",
            Verdict::DivergesEvidence => "diverges_evidence",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// The rule and the statistics a verdict was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictBasis {
    pub rule: String,
    /// Threshold parameters of the rule, by name.
    pub thresholds: Vec<(String, f64)>,
    /// Statistics computed from the series, by name.
    pub statistics: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport<T> {
    pub terms: Vec<T>,
    pub partial_sums: Vec<T>,
    pub verdict: Verdict,
    pub verdict_basis: VerdictBasis,
    pub horizon: usize,
}

impl<T: Scalar> SeriesReport<T> {
    /// Partial sums by plain left-to-right addition, so that
    /// `partial_sums[n] == partial_sums[n-1] + terms[n]` holds bit for bit.
    fn from_terms(terms: Vec<T>, verdict: Verdict, verdict_basis: VerdictBasis) -> Self {
        let mut acc = T::zero();
        let partial_sums = terms
            .iter()
            .map(|&t| {
                acc += t;
                acc
            })
            .collect();
        let horizon = terms.len();
        SeriesReport {
            terms,
            partial_sums,
            verdict,
            verdict_basis,
            horizon,
        }
    }

    pub fn total(&self) -> T {
        self.partial_sums.last().copied().unwrap_or_else(T::zero)
    }

    pub fn summability(terms: Vec<T>) -> Self {
        let (verdict, basis) = summability_verdict(&terms);
        Self::from_terms(terms, verdict, basis)
    }
}

fn max_of<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::neg_infinity(), |m, &x| m.max(x))
}

fn min_of<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::infinity(), |m, &x| m.min(x))
}

/// Summability verdict for `terms[0..]`, with `terms[k]` the term at `n = k + 1`.
///
/// Over the last half of the horizon, `w_n = terms[n]·n^1.1` is called bounded
/// when its maximum over the final quarter does not exceed its maximum over
/// the third quarter. Bounded weighted terms give `converges_evidence`;
/// otherwise terms whose minimum over the last half exceeds the threshold give
/// `diverges_evidence`; anything else is `inconclusive`.
pub fn summability_verdict<T: Scalar>(terms: &[T]) -> (Verdict, VerdictBasis) {
    let h = terms.len();
    let mut basis = VerdictBasis {
        rule: "weighted terms n^p*a_n bounded over the last half => converges_evidence; \
               min a_n over the last half > threshold => diverges_evidence"
            .into(),
        thresholds: vec![
            ("exponent".into(), VERDICT_EXPONENT),
            ("divergence_threshold".into(), DIVERGENCE_THRESHOLD),
            ("relative_slack".into(), BOUNDED_SLACK),
        ],
        statistics: Vec::new(),
    };
    if h < 4 {
        basis.statistics.push(("horizon".into(), h as f64));
        return (Verdict::Inconclusive, basis);
    }
    let p = T::lit(VERDICT_EXPONENT);
    let weighted: Vec<T> = terms
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            if a == T::zero() {
                a
            } else {
                a * T::from_count(k as u64 + 1).powf(p)
            }
        })
        .collect();
    let half = h / 2;
    let three_q = half + (h - half) / 2;
    let third_max = max_of(&weighted[half..three_q]);
    let last_max = max_of(&weighted[three_q..]);
    let last_half_min = min_of(&terms[half..]);
    basis.statistics = vec![
        ("third_quarter_weighted_max".into(), third_max.as_f64()),
        ("last_quarter_weighted_max".into(), last_max.as_f64()),
        ("last_half_min_term".into(), last_half_min.as_f64()),
    ];
    let bounded = last_max.is_finite() && last_max <= third_max.max(T::zero()) * (T::one() + T::lit(BOUNDED_SLACK));
    let verdict = if bounded {
        Verdict::ConvergesEvidence
    } else if last_half_min > T::lit(DIVERGENCE_THRESHOLD) {
        Verdict::DivergesEvidence
    } else {
        Verdict::Inconclusive
    };
    (verdict, basis)
}

/// Boundedness verdict for a running-average series: bounded when the
/// maximum over the last half is at most ten times the median of the first.
pub fn boundedness_verdict<T: Scalar>(series: &[T]) -> (Verdict, VerdictBasis) {
    let h = series.len();
    let mut basis = VerdictBasis {
        rule: "max over the last half <= factor * median of the first half".into(),
        thresholds: vec![("factor".into(), MAD_FACTOR)],
        statistics: Vec::new(),
    };
    if h < 2 {
        return (Verdict::Inconclusive, basis);
    }
    let half = h / 2;
    let mut first: Vec<T> = series[..half].to_vec();
    first.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = crate::stats::quantile_sorted(&first, T::lit(0.5));
    let last_max = max_of(&series[half..]);
    basis.statistics = vec![
        ("first_half_median".into(), median.as_f64()),
        ("last_half_max".into(), last_max.as_f64()),
    ];
    let verdict = if last_max <= T::lit(MAD_FACTOR) * median {
        Verdict::ConvergesEvidence
    } else {
        Verdict::DivergesEvidence
    };
    (verdict, basis)
}

/// `Σ var_fn(n) / b_n²` up to `horizon`.
pub fn kolmogorov_series<T, F>(var_fn: F, normalizer: &NormalizerSpec<T>, horizon: usize) -> Result<SeriesReport<T>>
where
    T: Scalar,
    F: Fn(u64) -> T,
{
    if horizon < 10 {
        return Err(Error::InvalidArgument(format!(
            "horizon must be at least 10, got {horizon}"
        )));
    }
    let b = normalizer.values(horizon)?;
    let mut terms = Vec::with_capacity(horizon);
    for n in 1..=horizon as u64 {
        let v = var_fn(n);
        if v < T::zero() || v.is_nan() {
            return Err(Error::NegativeVariance { n, value: v.as_f64() });
        }
        let bn = b[n as usize - 1];
        terms.push(v / (bn * bn));
    }
    Ok(SeriesReport::summability(terms))
}

/// [`kolmogorov_series`] with the family's analytic variances.
pub fn kolmogorov_series_family<T: Scalar>(
    family: &SequenceFamily<T>,
    normalizer: &NormalizerSpec<T>,
    horizon: usize,
) -> Result<SeriesReport<T>> {
    let m = family.require_moments()?;
    kolmogorov_series(|n| m.var(n), normalizer, horizon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport<T> {
    pub n_grid: Vec<u64>,
    /// `V̂(S_n) / Σ_{k<=n} V(X_k)` per grid point.
    pub ratios: Vec<T>,
    pub stderrs: Vec<T>,
    /// Largest ratio over the grid.
    pub c_hat: T,
    /// Sample variance of `S_n` per grid point.
    pub sum_variances: Vec<T>,
    pub variance_sums: Vec<T>,
    /// `analytic` or `sample` denominator.
    pub denominator_source: String,
    pub replications: u64,
    pub batches: u64,
}

/// Number of contiguous replication batches behind ratio standard errors.
pub const RATIO_BATCHES: u64 = 20;

/// Estimates the quasi-uncorrelation ratio `V(S_n) / Σ V(X_k)` on a grid of
/// `n` from independent whole-trajectory replications.
///
/// The denominator is analytic when the family carries moments, otherwise
/// the sum of per-index sample variances. Standard errors come from the
/// spread of the ratio across [`RATIO_BATCHES`] replication batches.
pub fn quasi_uncorrelation_ratio<T: Scalar>(
    family: &SequenceFamily<T>,
    n_grid: &[u64],
    replications: u64,
    seed: u64,
) -> Result<RatioReport<T>> {
    if replications < MIN_REPLICATIONS {
        return Err(Error::InsufficientReplications {
            min: MIN_REPLICATIONS,
            got: replications,
        });
    }
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::InvalidArgument("n_grid must be non-empty with n >= 1".into()));
    }
    let n_max = *n_grid.iter().max().unwrap() as usize;
    family.validate_horizon(n_max)?;
    let analytic = family.moments().cloned();
    let track_indices = analytic.is_none();

    struct Rep<T> {
        sums: Vec<T>,
        per_index: Vec<RunningMoments<T>>,
    }
    let reps: Vec<Rep<T>> = map_blocks(replications, |range| {
        let mut buf = Vec::with_capacity(n_max);
        let mut per_index = if track_indices {
            vec![RunningMoments::new(); n_max]
        } else {
            Vec::new()
        };
        let mut sums = Vec::with_capacity(range.clone().count() * n_grid.len());
        for r in range {
            family.fill_values(derive_seed(seed, r), n_max, None, &mut buf);
            let mut s = T::zero();
            let mut prefix = Vec::with_capacity(n_max);
            for (k, &x) in buf.iter().enumerate() {
                s += x;
                prefix.push(s);
                if track_indices {
                    per_index[k].push(x);
                }
            }
            sums.extend(n_grid.iter().map(|&n| prefix[n as usize - 1]));
        }
        Rep { sums, per_index }
    });

    let g = n_grid.len();
    let variance_sums: Vec<T> = match &analytic {
        Some(m) => n_grid.iter().map(|&n| m.variance_sum(n)).collect(),
        None => {
            let mut merged = vec![RunningMoments::new(); n_max];
            for rep in &reps {
                for (acc, part) in merged.iter_mut().zip(&rep.per_index) {
                    acc.merge(part);
                }
            }
            let mut acc = CompensatedSum::new();
            let cumulative: Vec<T> = merged
                .iter()
                .map(|m| {
                    acc.add(m.variance());
                    acc.value()
                })
                .collect();
            n_grid.iter().map(|&n| cumulative[n as usize - 1]).collect()
        }
    };

    // Whole-sample and per-batch variances of S_n, in replication order.
    let batches = RATIO_BATCHES.min(replications / 5).max(2);
    let mut overall = vec![RunningMoments::new(); g];
    let mut per_batch = vec![vec![RunningMoments::new(); g]; batches as usize];
    let mut r = 0u64;
    for rep in &reps {
        for row in rep.sums.chunks(g) {
            let b = (r * batches / replications) as usize;
            for (i, &s) in row.iter().enumerate() {
                overall[i].push(s);
                per_batch[b][i].push(s);
            }
            r += 1;
        }
    }

    let mut ratios = Vec::with_capacity(g);
    let mut stderrs = Vec::with_capacity(g);
    let mut sum_variances = Vec::with_capacity(g);
    for i in 0..g {
        let denom = variance_sums[i];
        let v = overall[i].variance();
        sum_variances.push(v);
        let ratio_of = |num: T| {
            if denom > T::zero() {
                num / denom
            } else if num == T::zero() {
                T::one()
            } else {
                T::infinity()
            }
        };
        ratios.push(ratio_of(v));
        let mut spread = RunningMoments::new();
        for batch in &per_batch {
            spread.push(ratio_of(batch[i].variance()));
        }
        stderrs.push(spread.std_error());
    }
    let c_hat = max_of(&ratios);
    Ok(RatioReport {
        n_grid: n_grid.to_vec(),
        ratios,
        stderrs,
        c_hat,
        sum_variances,
        variance_sums,
        denominator_source: if analytic.is_some() { "analytic" } else { "sample" }.into(),
        replications,
        batches,
    })
}

/// Monte Carlo settings for checks that may lack analytic moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McFallback {
    pub replications: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledMeanSup<T> {
    /// `max_{n<=horizon} E S_n / b_n`.
    pub a_hat: T,
    pub argmax_n: u64,
    /// `E S_n / b_n` for `n = 1..=horizon`.
    pub series: Vec<T>,
    /// `analytic` or `monte_carlo`.
    pub source: String,
    /// Set when the series is still climbing at the horizon, so the
    /// horizon-limited maximum says nothing about the supremum.
    pub growth_flag: bool,
    pub horizon: usize,
}

/// Horizon-limited `sup E S_n / b_n`.
pub fn scaled_mean_sup<T: Scalar>(
    family: &SequenceFamily<T>,
    normalizer: &NormalizerSpec<T>,
    horizon: usize,
    fallback: Option<McFallback>,
) -> Result<ScaledMeanSup<T>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let b = normalizer.values(horizon)?;
    let (mean_sums, stderr, source) = match (family.moments(), fallback) {
        (Some(m), _) => (m.mean_sum_path(horizon), vec![T::zero(); horizon], "analytic"),
        (None, Some(fb)) => {
            let (means, ses) = sampled_mean_sums(family, horizon, fb)?;
            (means, ses, "monte_carlo")
        }
        (None, None) => {
            return Err(Error::MomentsUnavailable(format!(
                "`{}` has no analytic mean and no Monte Carlo fallback was configured",
                family.descriptor().display_label()
            )))
        }
    };
    let mut series = Vec::with_capacity(horizon);
    let mut a_hat = T::neg_infinity();
    let mut argmax = 1u64;
    for (k, (&es, &bn)) in mean_sums.iter().zip(&b).enumerate() {
        let v = es / bn;
        if !v.is_finite() {
            return Err(Error::NonfiniteMean(k as u64 + 1));
        }
        if v > a_hat {
            a_hat = v;
            argmax = k as u64 + 1;
        }
        series.push(v);
    }
    let growth_flag = if horizon >= 4 {
        let half = horizon / 2;
        let three_q = half + (horizon - half) / 2;
        let early = max_of(&series[..half]);
        let late = max_of(&series[three_q..]);
        let noise = stderr[horizon - 1] / b[horizon - 1];
        late > early + early.abs() * T::lit(1e-6) + T::lit(4.0) * noise + T::lit(1e-12)
    } else {
        false
    };
    Ok(ScaledMeanSup {
        a_hat,
        argmax_n: argmax,
        series,
        source: source.into(),
        growth_flag,
        horizon,
    })
}

fn sampled_mean_sums<T: Scalar>(
    family: &SequenceFamily<T>,
    horizon: usize,
    fb: McFallback,
) -> Result<(Vec<T>, Vec<T>)> {
    if fb.replications < MIN_REPLICATIONS {
        return Err(Error::InsufficientReplications {
            min: MIN_REPLICATIONS,
            got: fb.replications,
        });
    }
    family.validate_horizon(horizon)?;
    let parts = map_blocks(fb.replications, |range| {
        let mut acc = vec![RunningMoments::new(); horizon];
        let mut buf = Vec::with_capacity(horizon);
        for r in range {
            family.fill_values(derive_seed(fb.seed, r), horizon, None, &mut buf);
            let mut s = T::zero();
            for (a, &x) in acc.iter_mut().zip(&buf) {
                s += x;
                a.push(s);
            }
        }
        acc
    });
    let mut merged = vec![RunningMoments::new(); horizon];
    for part in &parts {
        for (m, p) in merged.iter_mut().zip(part) {
            m.merge(p);
        }
    }
    Ok((
        merged.iter().map(|m| m.mean()).collect(),
        merged.iter().map(|m| m.std_error()).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgTailReport<T> {
    /// `∫_0^{t_max} sup-tail(t) dt`.
    pub value: T,
    /// `∫_{t_max}^∞ sup-tail(t) dt`; infinite when the remainder cannot be
    /// integrated, which is reported as divergence.
    pub truncation_bound: T,
    pub abs_error_estimate: T,
    pub t_max: T,
    pub diverges: bool,
}

/// Grid resolution of the monotonicity scan over `[0, t_max]`.
const MONOTONE_GRID: usize = 1024;

/// Integrates a uniform tail bound `t ↦ sup_n P(|X_n| > t)` over `[0, t_max]`
/// and bounds the remainder beyond `t_max`.
pub fn cg_tail_integral<T, F>(tail_sup_fn: F, t_max: T, tolerance: T) -> Result<CgTailReport<T>>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    if !(t_max > T::zero()) || !t_max.is_finite() {
        return Err(Error::InvalidArgument(format!("t_max must be positive, got {t_max}")));
    }
    if !(tolerance > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    // Scan [0, t_max] on a uniform grid, then geometrically past it.
    let mut points: Vec<T> = (0..=MONOTONE_GRID)
        .map(|k| t_max * T::from_count(k as u64) / T::from_count(MONOTONE_GRID as u64))
        .collect();
    points.extend((1..=40).map(|k| t_max * T::lit(2.0).powi(k)));
    let mut prev = tail_sup_fn(T::zero());
    for &t in &points {
        let v = tail_sup_fn(t);
        if !(v >= T::zero() && v <= T::one() + tolerance) {
            return Err(Error::InvalidArgument(format!(
                "tail value {v} at t = {t} lies outside [0, 1]"
            )));
        }
        if v > prev + tolerance {
            return Err(Error::NonmonotoneTail {
                t: t.as_f64(),
                before: prev.as_f64(),
                after: v.as_f64(),
            });
        }
        prev = v;
    }
    let head = integrate_1d(&tail_sup_fn, T::zero(), t_max, tolerance)?;
    let (truncation_bound, tail_err) = match integrate_1d(&tail_sup_fn, t_max, T::infinity(), tolerance) {
        Ok(r) => (r.value, r.abs_error_estimate),
        Err(Error::ToleranceNotMet { .. }) | Err(Error::NonFiniteIntegrand(_)) => (T::infinity(), T::zero()),
        Err(e) => return Err(e),
    };
    Ok(CgTailReport {
        value: head.value,
        truncation_bound,
        abs_error_estimate: head.abs_error_estimate + tail_err,
        t_max,
        diverges: !truncation_bound.is_finite(),
    })
}

/// `t ↦ max_{n<=n_max} P(X_n > t)` for a non-negative family with an analytic
/// tail, which then equals `max_{n<=n_max} P(|X_n| > t)`.
pub fn family_sup_tail<T: Scalar>(family: &SequenceFamily<T>, n_max: u64) -> Result<impl Fn(T) -> T + Send + Sync> {
    let m = family.require_moments()?;
    if !m.is_nonnegative() {
        return Err(Error::InvalidArgument(format!(
            "`{}` is not non-negative; supply the sup-tail explicitly",
            family.descriptor().display_label()
        )));
    }
    let tail = m.tail_fn().ok_or_else(|| {
        Error::MomentsUnavailable(format!(
            "`{}` has no tail function",
            family.descriptor().display_label()
        ))
    })?;
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be positive".into()));
    }
    Ok(move |t: T| {
        if t < T::zero() {
            return T::one();
        }
        (1..=n_max).fold(T::zero(), |acc, n| acc.max(tail(n, t)))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCgReport<T> {
    /// One report per supremum horizon `N`.
    pub by_sup_horizon: Vec<(u64, CgTailReport<T>)>,
    /// `value + truncation_bound` per `N`.
    pub totals: Vec<T>,
    /// Infinite remainder at some `N`, or totals that keep growing with `N`.
    pub diverges: bool,
}

/// [`cg_tail_integral`] of [`family_sup_tail`] for increasing supremum
/// horizons. A total that grows by more than half from the first to the last
/// horizon is flagged as divergence of the uniform tail integral.
pub fn cg_tail_family<T: Scalar>(
    family: &SequenceFamily<T>,
    t_max: T,
    tolerance: T,
    sup_horizons: &[u64],
) -> Result<FamilyCgReport<T>> {
    if sup_horizons.is_empty() {
        return Err(Error::InvalidArgument("sup_horizons must be non-empty".into()));
    }
    let mut by = Vec::with_capacity(sup_horizons.len());
    let mut totals = Vec::with_capacity(sup_horizons.len());
    for &n in sup_horizons {
        let f = family_sup_tail(family, n)?;
        let r = cg_tail_integral(f, t_max, tolerance)?;
        totals.push(r.value + r.truncation_bound);
        by.push((n, r));
    }
    let first = totals[0];
    let last = *totals.last().unwrap();
    let diverges = by.iter().any(|(_, r)| r.diverges) || last > T::lit(1.5) * first + T::lit(10.0) * tolerance;
    Ok(FamilyCgReport {
        by_sup_horizon: by,
        totals,
        diverges,
    })
}

/// Running averages `(1/n) Σ_{k<=n} Ê|X_k − E X_k|`, judged for boundedness.
///
/// Centring uses analytic means when available; otherwise per-index sample
/// means from a first pass over the same replications.
pub fn mean_abs_deviation_rate<T: Scalar>(
    family: &SequenceFamily<T>,
    horizon: usize,
    replications: u64,
    seed: u64,
) -> Result<SeriesReport<T>> {
    if replications < MIN_REPLICATIONS {
        return Err(Error::InsufficientReplications {
            min: MIN_REPLICATIONS,
            got: replications,
        });
    }
    if horizon < 2 {
        return Err(Error::InvalidArgument(format!(
            "horizon must be at least 2, got {horizon}"
        )));
    }
    family.validate_horizon(horizon)?;
    let centres: Vec<T> = match family.moments() {
        Some(m) => (1..=horizon as u64).map(|n| m.mean(n)).collect(),
        None => {
            let parts = per_index_sums(family, horizon, replications, seed, |_, x| x);
            parts.iter().map(|s| s.value() / T::from_count(replications)).collect()
        }
    };
    let abs = per_index_sums(family, horizon, replications, seed, |k, x| (x - centres[k]).abs());
    let r = T::from_count(replications);
    let mut acc = T::zero();
    let terms: Vec<T> = abs
        .iter()
        .enumerate()
        .map(|(k, s)| {
            acc += s.value() / r;
            acc / T::from_count(k as u64 + 1)
        })
        .collect();
    let (verdict, basis) = boundedness_verdict(&terms);
    Ok(SeriesReport::from_terms(terms, verdict, basis))
}

/// Per-index compensated sums of `g(k, X_{k+1})` over replications, reduced
/// in block order.
fn per_index_sums<T, G>(
    family: &SequenceFamily<T>,
    horizon: usize,
    replications: u64,
    seed: u64,
    g: G,
) -> Vec<CompensatedSum<T>>
where
    T: Scalar,
    G: Fn(usize, T) -> T + Sync + Send,
{
    let parts = map_blocks(replications, |range| {
        let mut acc = vec![CompensatedSum::new(); horizon];
        let mut buf = Vec::with_capacity(horizon);
        for r in range {
            family.fill_values(derive_seed(seed, r), horizon, None, &mut buf);
            for (k, (a, &x)) in acc.iter_mut().zip(&buf).enumerate() {
                a.add(g(k, x));
            }
        }
        acc
    });
    let mut total = vec![CompensatedSum::new(); horizon];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.add(p.value());
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationGapReport<T> {
    /// `E(X_n − Y_n) = E(X_n·1{X_n > n})`.
    pub l1_gaps: Vec<T>,
    /// `Σ_{k<=n} P(X_k > k)`.
    pub mismatch_prob_partial_sums: Vec<T>,
    /// `(E S_n − E T_n)/n = (1/n) Σ_{k<=n} l1_gaps[k]`.
    pub cesaro_gap: Vec<T>,
    /// `analytic` or `monte_carlo`.
    pub source: String,
    /// Standard errors of `l1_gaps` (zero for analytic values).
    pub l1_gap_stderrs: Vec<T>,
    pub horizon: usize,
}

impl<T: Scalar> TruncationGapReport<T> {
    fn assemble(l1_gaps: Vec<T>, probs: Vec<T>, l1_gap_stderrs: Vec<T>, source: &str) -> Self {
        let mut acc = T::zero();
        let mismatch_prob_partial_sums = probs
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect();
        let mut gap_acc = T::zero();
        let cesaro_gap = l1_gaps
            .iter()
            .enumerate()
            .map(|(k, &g)| {
                gap_acc += g;
                gap_acc / T::from_count(k as u64 + 1)
            })
            .collect();
        let horizon = l1_gaps.len();
        TruncationGapReport {
            l1_gaps,
            mismatch_prob_partial_sums,
            cesaro_gap,
            source: source.into(),
            l1_gap_stderrs,
            horizon,
        }
    }
}

/// Samples checked for negativity before trusting a closed form.
const NEGATIVITY_PROBE: u64 = 100;

fn check_nonnegative<T: Scalar>(
    family: &SequenceFamily<T>,
    horizon: usize,
    replications: u64,
    seed: u64,
) -> Result<()> {
    if let Some(m) = family.moments() {
        if !m.is_nonnegative() {
            let n = (1..=horizon as u64).find(|&n| m.essinf(n) < T::zero()).unwrap_or(1);
            return Err(Error::NegativityDetected {
                n,
                value: m.essinf(n).as_f64(),
            });
        }
    }
    let found = map_indexed(replications, |r| {
        let mut buf = Vec::with_capacity(horizon);
        family.fill_values(derive_seed(seed, r), horizon, None, &mut buf);
        buf.iter()
            .enumerate()
            .find(|(_, x)| **x < T::zero())
            .map(|(k, &x)| (k as u64 + 1, x))
    });
    match found.into_iter().flatten().next() {
        Some((n, x)) => Err(Error::NegativityDetected { n, value: x.as_f64() }),
        None => Ok(()),
    }
}

/// Truncation diagnostics for `Y_n = X_n·1{X_n <= n}`: closed form via the
/// tail function when one is attached, Monte Carlo otherwise.
pub fn truncation_gap_report<T: Scalar>(
    family: &SequenceFamily<T>,
    horizon: usize,
    replications: u64,
    seed: u64,
) -> Result<TruncationGapReport<T>> {
    let Some(tail) = family.moments().and_then(|m| m.tail_fn()) else {
        return truncation_gap_report_mc(family, horizon, replications, seed);
    };
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    family.validate_horizon(horizon)?;
    check_nonnegative(family, horizon, replications.min(NEGATIVITY_PROBE), seed)?;
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
    let mut gaps = Vec::with_capacity(horizon);
    let mut probs = Vec::with_capacity(horizon);
    for n in 1..=horizon as u64 {
        let nf = T::from_count(n);
        let p = tail(n, nf);
        // E(X·1{X>n}) = n·P(X>n) + ∫_n^∞ P(X>t) dt for X >= 0.
        let beyond = integrate_1d(|t| tail(n, t), nf, T::infinity(), tol)?;
        gaps.push(nf * p + beyond.value);
        probs.push(p);
    }
    Ok(TruncationGapReport::assemble(
        gaps,
        probs,
        vec![T::zero(); horizon],
        "analytic",
    ))
}

/// Monte Carlo version of [`truncation_gap_report`].
pub fn truncation_gap_report_mc<T: Scalar>(
    family: &SequenceFamily<T>,
    horizon: usize,
    replications: u64,
    seed: u64,
) -> Result<TruncationGapReport<T>> {
    if replications < MIN_REPLICATIONS {
        return Err(Error::InsufficientReplications {
            min: MIN_REPLICATIONS,
            got: replications,
        });
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    family.validate_horizon(horizon)?;
    check_nonnegative(family, horizon, 0, seed)?;
    struct Block<T> {
        gap: Vec<RunningMoments<T>>,
        hits: Vec<u64>,
        negative: Option<(u64, T)>,
    }
    let parts = map_blocks(replications, |range| {
        let mut block = Block {
            gap: vec![RunningMoments::new(); horizon],
            hits: vec![0; horizon],
            negative: None,
        };
        let mut buf = Vec::with_capacity(horizon);
        for r in range {
            family.fill_values(derive_seed(seed, r), horizon, None, &mut buf);
            for (k, &x) in buf.iter().enumerate() {
                if x < T::zero() && block.negative.is_none() {
                    block.negative = Some((k as u64 + 1, x));
                }
                let over = x > T::from_count(k as u64 + 1);
                block.gap[k].push(if over { x } else { T::zero() });
                block.hits[k] += over as u64;
            }
        }
        block
    });
    if let Some((n, x)) = parts.iter().find_map(|b| b.negative) {
        return Err(Error::NegativityDetected { n, value: x.as_f64() });
    }
    let mut gap = vec![RunningMoments::new(); horizon];
    let mut hits = vec![0u64; horizon];
    for part in &parts {
        for k in 0..horizon {
            gap[k].merge(&part.gap[k]);
            hits[k] += part.hits[k];
        }
    }
    let r = T::from_count(replications);
    Ok(TruncationGapReport::assemble(
        gap.iter().map(|m| m.mean()).collect(),
        hits.iter().map(|&h| T::from_count(h) / r).collect(),
        gap.iter().map(|m| m.std_error()).collect(),
        "monte_carlo",
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselReport<T> {
    pub k: u64,
    /// `Σ_{j>=k} 1/j²`.
    pub tail_value: T,
    /// `π²/(6k)`.
    pub bound: T,
    pub holds: bool,
}

/// `Σ_{j>=k} 1/j² = π²/6 − Σ_{j<k} 1/j²` against the bound `π²/(6k)`.
pub fn basel_tail_bound<T: Scalar>(k: u64) -> Result<BaselReport<T>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let zeta2 = T::PI() * T::PI() / T::lit(6.0);
    // Smallest terms first.
    let head = crate::stats::compensated_sum((1..k).rev().map(|j| {
        let jf = T::from_count(j);
        T::one() / (jf * jf)
    }));
    let tail_value = zeta2 - head;
    let bound = zeta2 / T::from_count(k);
    Ok(BaselReport {
        k,
        tail_value,
        bound,
        holds: tail_value <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{make_family, FamilyDescriptor, IidBase, Transform};
    use proptest::prelude::*;

    fn fam(d: FamilyDescriptor) -> SequenceFamily<f64> {
        make_family(&d).unwrap()
    }

    #[test]
    fn normalizer_validation() {
        assert!(NormalizerSpec::<f64>::Power { p: 0.0 }.validate().is_err());
        assert!(NormalizerSpec::Explicit { values: vec![1.0, 0.5] }.validate().is_err());
        assert!(NormalizerSpec::Explicit {
            values: vec![1.0, -1.0]
        }
        .validate()
        .is_err());
        let e = NormalizerSpec::Explicit {
            values: vec![1.0, 2.0, 2.0],
        };
        assert!(e.validate().is_ok());
        assert!(e.is_horizon_limited());
        assert!(e.b(4).is_err());
        assert_eq!(NormalizerSpec::<f64>::Power { p: 0.5 }.b(16).unwrap(), 4.0);
        assert_eq!(NormalizerSpec::<f64>::Linear.b(7).unwrap(), 7.0);
    }

    #[test]
    fn normalizer_json() {
        let n: NormalizerSpec<f64> = serde_json::from_str(r#"{"kind":"power","p":0.75}"#).unwrap();
        assert_eq!(n, NormalizerSpec::Power { p: 0.75 });
        let l: NormalizerSpec<f64> = serde_json::from_str(r#"{"kind":"linear"}"#).unwrap();
        assert!(l.is_linear());
        assert_eq!(serde_json::to_string(&l).unwrap(), r#"{"kind":"linear"}"#);
    }

    #[test]
    fn kolmogorov_step_diverges() {
        let f = fam(FamilyDescriptor::step());
        let r = kolmogorov_series_family(&f, &NormalizerSpec::Linear, 1000).unwrap();
        assert!(r.terms.iter().all(|&t| t == 0.25));
        assert_eq!(r.verdict, Verdict::DivergesEvidence);
    }

    #[test]
    fn kolmogorov_zero_converges() {
        let r = kolmogorov_series(|_| 0.0, &NormalizerSpec::Linear, 100).unwrap();
        assert!(r.terms.iter().all(|&t| t == 0.0));
        assert_eq!(r.verdict, Verdict::ConvergesEvidence);
    }

    #[test]
    fn kolmogorov_unit_variance_matches_basel() {
        let r = kolmogorov_series(|_| 1.0, &NormalizerSpec::Linear, 10_000).unwrap();
        // Σ_{n<=N} 1/n² = π²/6 − 1/N + O(1/N²).
        let oracle = std::f64::consts::PI.powi(2) / 6.0;
        assert!(r.total() < oracle);
        assert!((oracle - r.total() - 1e-4).abs() < 1e-8, "{}", r.total());
        assert_eq!(r.verdict, Verdict::ConvergesEvidence);
    }

    #[test]
    fn kolmogorov_cosine_bounded_by_half_basel() {
        let f = fam(FamilyDescriptor::cosine());
        let r = kolmogorov_series_family(&f, &NormalizerSpec::Linear, 10_000).unwrap();
        assert_eq!(r.verdict, Verdict::ConvergesEvidence);
        assert!(r.total() <= std::f64::consts::PI.powi(2) / 12.0 + 1e-6);
    }

    #[test]
    fn kolmogorov_errors() {
        assert!(matches!(
            kolmogorov_series(|n| if n == 5 { -1.0 } else { 1.0 }, &NormalizerSpec::Linear, 20),
            Err(Error::NegativeVariance { n: 5, .. })
        ));
        assert!(kolmogorov_series(|_| 1.0, &NormalizerSpec::Linear, 9).is_err());
        let short = NormalizerSpec::Explicit { values: vec![1.0; 5] };
        assert!(kolmogorov_series(|_| 1.0, &short, 20).is_err());
    }

    #[test]
    fn power_normalizer_changes_verdict() {
        // V X_n = 1 with b_n = n^0.4 gives terms n^-0.8: not summable.
        let r = kolmogorov_series(|_| 1.0, &NormalizerSpec::Power { p: 0.4 }, 1000).unwrap();
        assert_eq!(r.verdict, Verdict::DivergesEvidence);
        let r = kolmogorov_series(|_| 1.0, &NormalizerSpec::Power { p: 0.75 }, 1000).unwrap();
        assert_eq!(r.verdict, Verdict::ConvergesEvidence);
    }

    #[test]
    fn quasi_ratio_single_index_is_one() {
        let f = fam(FamilyDescriptor::gated_gaussian());
        let r = quasi_uncorrelation_ratio(&f, &[1], 20_000, 4).unwrap();
        assert!((r.ratios[0] - 1.0).abs() < 4.0 * r.stderrs[0], "{:?}", r);
    }

    #[test]
    fn quasi_ratio_rejects_few_replications() {
        let f = fam(FamilyDescriptor::cosine());
        assert!(matches!(
            quasi_uncorrelation_ratio(&f, &[10], 99, 0),
            Err(Error::InsufficientReplications { min: 100, got: 99 })
        ));
    }

    #[test]
    fn quasi_ratio_sample_denominator_without_moments() {
        // Truncating the gated Gaussian drops the analytic profile.
        let f = fam(FamilyDescriptor::gated_gaussian().with(Transform::Truncate));
        assert!(f.moments().is_none());
        let r = quasi_uncorrelation_ratio(&f, &[1, 10], 5_000, 8).unwrap();
        assert_eq!(r.denominator_source, "sample");
        assert!((r.ratios[0] - 1.0).abs() < 0.1);
        assert!((r.ratios[1] - 1.0).abs() < 4.0 * r.stderrs[1] + 0.05);
    }

    #[test]
    fn quasi_ratio_thread_independent() {
        let f = fam(FamilyDescriptor::cosine());
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| quasi_uncorrelation_ratio(&f, &[5, 50], 1000, 77).unwrap())
        };
        assert_eq!(run(1), run(6));
    }

    #[test]
    fn scaled_mean_sup_examples() {
        let sc = fam(FamilyDescriptor::shifted_cosine());
        let r = scaled_mean_sup(&sc, &NormalizerSpec::Linear, 1000, None).unwrap();
        assert_eq!(r.a_hat, 1.0);
        assert!(!r.growth_flag);

        let step = fam(FamilyDescriptor::step());
        let r = scaled_mean_sup(&step, &NormalizerSpec::Linear, 1000, None).unwrap();
        assert_eq!(r.argmax_n, 1000);
        assert_eq!(r.a_hat, 1001.0 / 4.0);
        assert!(r.growth_flag);

        let zero = fam(FamilyDescriptor::constant(0.0));
        let r = scaled_mean_sup(&zero, &NormalizerSpec::Linear, 100, None).unwrap();
        assert_eq!(r.a_hat, 0.0);
        assert!(!r.growth_flag);
    }

    #[test]
    fn scaled_mean_sup_fallback() {
        let f = fam(FamilyDescriptor::exponential(1.0)).with_moments(None);
        assert!(matches!(
            scaled_mean_sup(&f, &NormalizerSpec::Linear, 50, None),
            Err(Error::MomentsUnavailable(_))
        ));
        let r = scaled_mean_sup(
            &f,
            &NormalizerSpec::Linear,
            50,
            Some(McFallback {
                replications: 4000,
                seed: 3,
            }),
        )
        .unwrap();
        assert_eq!(r.source, "monte_carlo");
        assert!((r.a_hat - 1.0).abs() < 0.1, "{}", r.a_hat);
        assert!(!r.growth_flag);
    }

    #[test]
    fn cg_exponential_tail_is_one() {
        let r = cg_tail_integral(|t: f64| (-t).exp(), 30.0, 1e-10).unwrap();
        assert!((r.value + r.truncation_bound - 1.0).abs() < 1e-4);
        assert!(!r.diverges);
        let f = fam(FamilyDescriptor::exponential(1.0));
        let rep = cg_tail_family(&f, 30.0, 1e-10, &[1, 10, 100]).unwrap();
        assert!(!rep.diverges);
        assert!((rep.totals[2] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn cg_zero_tail() {
        let r = cg_tail_integral(|_t: f64| 0.0, 5.0, 1e-10).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.truncation_bound, 0.0);
    }

    #[test]
    fn cg_step_family_flags_divergence() {
        let f = fam(FamilyDescriptor::step());
        for t_max in [1.0, 10.0, 100.0] {
            let rep = cg_tail_family(&f, t_max, 1e-8, &[10, 100, 1000]).unwrap();
            assert!(rep.diverges, "t_max {t_max}");
            for (n, r) in &rep.by_sup_horizon {
                // sup_{k<=n} P(X_k > t) = 1/2 on [0, n).
                let oracle = 0.5 * (*n as f64);
                assert!((r.value + r.truncation_bound - oracle).abs() < 1e-6);
            }
        }
        // An unbounded sup-tail diverges outright.
        let r = cg_tail_integral(|_t: f64| 0.5, 10.0, 1e-8).unwrap();
        assert!(r.diverges);
        assert!((r.value - 5.0).abs() < 1e-8);
    }

    #[test]
    fn cg_rejects_increasing_tail() {
        let r = cg_tail_integral(|t: f64| (t / 10.0).min(1.0), 5.0, 1e-6);
        assert!(matches!(r, Err(Error::NonmonotoneTail { .. })));
        assert!(cg_tail_integral(|_t: f64| 2.0, 5.0, 1e-6).is_err());
    }

    #[test]
    fn mad_gated_gaussian() {
        let f = fam(FamilyDescriptor::gated_gaussian());
        let r = mean_abs_deviation_rate(&f, 100, 10_000, 5).unwrap();
        let oracle = 0.5 * (2.0 / std::f64::consts::PI).sqrt();
        // 10⁶ draws in total; paths share a gate so allow a generous band.
        assert!((r.terms[99] - oracle).abs() < 0.01, "{}", r.terms[99]);
        assert_eq!(r.verdict, Verdict::ConvergesEvidence);
    }

    #[test]
    fn mad_zero_and_cosine() {
        let z = fam(FamilyDescriptor::constant(0.0));
        let r = mean_abs_deviation_rate(&z, 50, 100, 1).unwrap();
        assert!(r.terms.iter().all(|&t| t == 0.0));
        let c = fam(FamilyDescriptor::cosine());
        let r = mean_abs_deviation_rate(&c, 200, 2000, 1).unwrap();
        assert!(r.terms.iter().all(|&t| t <= 1.0));
        assert_eq!(r.verdict, Verdict::ConvergesEvidence);
    }

    #[test]
    fn mad_step_grows() {
        let f = fam(FamilyDescriptor::step());
        let r = mean_abs_deviation_rate(&f, 400, 200, 1).unwrap();
        // E|X_n − n/2| = n/2, so terms ≈ (n+1)/4.
        assert!((r.terms[399] - 401.0 / 4.0).abs() < 1e-9);
        // Linear growth keeps last-half max / first-half median near 4, under
        // the factor 10; quadratic growth (ratio near 16) is flagged.
        assert_eq!(r.verdict, Verdict::ConvergesEvidence);
        let quad: Vec<f64> = (1..=400).map(|n| (n * n) as f64).collect();
        assert_eq!(boundedness_verdict(&quad).0, Verdict::DivergesEvidence);
    }

    #[test]
    fn truncation_exponential_analytic() {
        let f = fam(FamilyDescriptor::exponential(1.0));
        let r = truncation_gap_report(&f, 50, 100, 1).unwrap();
        assert_eq!(r.source, "analytic");
        let oracle = 1.0 / (std::f64::consts::E - 1.0);
        // Σ_{n<=50} e^{-n} differs from the full series by ~e^{-50}.
        assert!((r.mismatch_prob_partial_sums[49] - oracle).abs() < 1e-12);
        for n in 1..=50usize {
            let nf = n as f64;
            assert!((r.l1_gaps[n - 1] - (nf + 1.0) * (-nf).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn truncation_exponential_mc_agrees() {
        let f = fam(FamilyDescriptor::exponential(1.0));
        let a = truncation_gap_report(&f, 10, 100, 1).unwrap();
        let m = truncation_gap_report_mc(&f, 10, 200_000, 2).unwrap();
        for k in 0..10 {
            let tol = 4.0 * m.l1_gap_stderrs[k] + 1e-12;
            assert!((a.l1_gaps[k] - m.l1_gaps[k]).abs() <= tol, "k={k}");
        }
    }

    #[test]
    fn truncation_step_gaps_zero() {
        let f = fam(FamilyDescriptor::step());
        let a = truncation_gap_report(&f, 100, 100, 1).unwrap();
        assert!(a.l1_gaps.iter().all(|&g| g == 0.0));
        let m = truncation_gap_report_mc(&f, 100, 200, 1).unwrap();
        assert!(m.l1_gaps.iter().all(|&g| g == 0.0));
        assert!(m.mismatch_prob_partial_sums.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn truncation_rejects_negative_families() {
        let f = fam(FamilyDescriptor::cosine());
        assert!(matches!(
            truncation_gap_report(&f, 10, 100, 1),
            Err(Error::NegativityDetected { .. })
        ));
        let g = fam(FamilyDescriptor::gated_gaussian().with(Transform::Truncate));
        assert!(matches!(
            truncation_gap_report(&g, 10, 100, 1),
            Err(Error::NegativityDetected { .. })
        ));
    }

    #[test]
    fn basel_examples() {
        let r = basel_tail_bound::<f64>(1).unwrap();
        assert_eq!(r.tail_value, r.bound);
        assert!(r.holds);
        let r = basel_tail_bound::<f64>(2).unwrap();
        assert!((r.tail_value - 0.644_934_066_848_226_4).abs() < 1e-12);
        assert!((r.bound - 0.822_467_033_424_113_2).abs() < 1e-12);
        let r = basel_tail_bound::<f64>(1000).unwrap();
        assert!((r.tail_value - 1.0 / 999.5).abs() < 1e-9);
        assert!(r.holds);
        assert!(basel_tail_bound::<f64>(0).is_err());
    }

    #[test]
    fn basel_against_direct_partial_sum() {
        // Independent route: sum 10⁷ terms from the top down plus the
        // Euler–Maclaurin remainder 1/N − 1/(2N²) + 1/(6N³).
        let n_terms = 10_000_000u64;
        for k in [2u64, 10, 1000] {
            let mut acc = 0.0f64;
            for j in (k..n_terms).rev() {
                let jf = j as f64;
                acc += 1.0 / (jf * jf);
            }
            let nf = n_terms as f64;
            acc += 1.0 / nf + 1.0 / (2.0 * nf * nf) + 1.0 / (6.0 * nf * nf * nf);
            let r = basel_tail_bound::<f64>(k).unwrap();
            assert!((r.tail_value - acc).abs() < 1e-12, "k={k}: {} vs {acc}", r.tail_value);
        }
    }

    #[test]
    fn basel_holds_everywhere() {
        for k in 1..=10_000 {
            assert!(basel_tail_bound::<f64>(k).unwrap().holds, "k={k}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn partial_sums_exact_and_monotone(vars in proptest::collection::vec(0.0f64..10.0, 10..200)) {
            let r = kolmogorov_series(|n| vars[n as usize - 1], &NormalizerSpec::Linear, vars.len()).unwrap();
            prop_assert_eq!(r.partial_sums[0], r.terms[0]);
            for n in 1..r.horizon {
                prop_assert_eq!(r.partial_sums[n], r.partial_sums[n - 1] + r.terms[n]);
                prop_assert!(r.partial_sums[n] >= r.partial_sums[n - 1]);
            }
        }

        #[test]
        fn cg_monotone_in_t_max(rate in 0.2f64..5.0, t1 in 0.1f64..20.0, dt in 0.0f64..20.0) {
            let tol = 1e-10;
            let a = cg_tail_integral(|t: f64| (-rate * t).exp(), t1, tol).unwrap();
            let b = cg_tail_integral(|t: f64| (-rate * t).exp(), t1 + dt, tol).unwrap();
            prop_assert!(b.value >= a.value - 2.0 * tol);
            prop_assert!(a.value <= t1 + tol);
        }

        #[test]
        fn cesaro_identity(rate in 0.3f64..3.0, horizon in 1usize..40) {
            let f = fam(FamilyDescriptor::exponential(rate));
            let r = truncation_gap_report(&f, horizon, 100, 0).unwrap();
            let mut acc = 0.0;
            for n in 0..horizon {
                acc += r.l1_gaps[n];
                prop_assert_eq!(r.cesaro_gap[n], acc / (n + 1) as f64);
            }
        }

        #[test]
        fn uniform_iid_ratio_near_one(seed in any::<u64>()) {
            let f = fam(FamilyDescriptor::iid(IidBase::Uniform { a: 0.0, b: 1.0 }));
            let r = quasi_uncorrelation_ratio(&f, &[2, 8, 32], 2000, seed).unwrap();
            for (ratio, se) in r.ratios.iter().zip(&r.stderrs) {
                prop_assert!(*ratio >= 0.0 && *se >= 0.0);
            }
        }
    }

    #[test]
    fn pairwise_uncorrelated_ratio_within_four_stderr() {
        for (k, d) in [
            FamilyDescriptor::cosine(),
            FamilyDescriptor::gated_gaussian(),
            FamilyDescriptor::exponential(1.0),
            FamilyDescriptor::step(),
        ]
        .into_iter()
        .enumerate()
        {
            let f = fam(d);
            let m = f.moments().unwrap();
            assert!(m.is_pairwise_uncorrelated());
            for n in [5u64, 20] {
                assert_eq!(m.sum_variance(n).unwrap(), m.variance_sum(n));
            }
            let r = quasi_uncorrelation_ratio(&f, &[5, 20], 20_000, 900 + k as u64).unwrap();
            for (ratio, se) in r.ratios.iter().zip(&r.stderrs) {
                assert!(
                    (ratio - 1.0).abs() <= 4.0 * se,
                    "{}: {ratio} ± {se}",
                    f.descriptor().display_label()
                );
            }
        }
    }
}
