//! Seeded replication engine: LLN convergence diagnostics, event
//! probabilities, the exact step-family deviation oracle, dependence probes,
//! empirical Chebyshev checks and a Monte Carlo cross-check of the Gaussian
//! positive-part moments.
//!
//! Replication `r` always draws from `derive_seed(master_seed, r)`, and every
//! reduction runs over a thread-independent partition, so results are
//! bit-identical for any worker count.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::conditions::NormalizerSpec;
use crate::error::{Error, Result};
use crate::exec::{map_blocks, map_indexed};
use crate::families::{FamilyDescriptor, SequenceFamily};
use crate::rng::{derive_seed, substream, Stream};
use crate::scalar::Scalar;
use crate::stats::{quantile_sorted, wilson_interval, CompensatedSum, Interval, Proportion, RunningMoments, Z_975};

/// Fewest replications for [`run_lln_experiment`].
pub const MIN_EXPERIMENT_REPLICATIONS: u64 = 30;
/// Fewest samples for [`estimate_event_probability`] and [`chebyshev_empirical`].
pub const MIN_EVENT_SAMPLES: u64 = 1000;
/// Fewest samples for [`dependence_probe`].
pub const MIN_PROBE_SAMPLES: u64 = 10_000;
/// Largest `n` accepted by [`exact_step_deviation`].
pub const MAX_EXACT_STEP_N: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStats<T> {
    pub checkpoint: u64,
    /// Mean of `(S_n − E S_n)/b_n` across replications.
    pub mean_dev: T,
    pub stddev: T,
    pub q05: T,
    pub q50: T,
    pub q95: T,
    /// Fraction with `|S_n − E S_n|/b_n <= tolerance`.
    pub frac_within_tol: T,
    /// Median of `|S_n − E S_n|/b_n`.
    pub median_abs_dev: T,
    /// Fraction of replications with `S_n` exactly zero.
    pub frac_exact_zero: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct ExperimentResult<T> {
    pub descriptor: FamilyDescriptor,
    pub normalizer: NormalizerSpec<T>,
    pub master_seed: u64,
    pub replications: u64,
    pub tolerance: T,
    pub checkpoints: Vec<u64>,
    pub per_checkpoint: Vec<CheckpointStats<T>>,
    /// Wall-clock time; kept out of serialized bodies so replays compare equal.
    #[serde(skip)]
    pub runtime_ms: u64,
}

fn check_checkpoints(checkpoints: &[u64]) -> Result<()> {
    if checkpoints.is_empty() || checkpoints[0] == 0 || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::CheckpointUnsorted);
    }
    Ok(())
}

fn sort_values<T: Scalar>(xs: &mut [T]) {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
}

/// Replicated trajectories summarised at each checkpoint by the normed
/// deviation `(S_n − E S_n)/b_n`.
pub fn run_lln_experiment<T: Scalar>(
    family: &SequenceFamily<T>,
    normalizer: &NormalizerSpec<T>,
    checkpoints: &[u64],
    replications: u64,
    tolerance: T,
    master_seed: u64,
) -> Result<ExperimentResult<T>> {
    let started = std::time::Instant::now();
    check_checkpoints(checkpoints)?;
    if replications < MIN_EXPERIMENT_REPLICATIONS {
        return Err(Error::InsufficientReplications {
            min: MIN_EXPERIMENT_REPLICATIONS,
            got: replications,
        });
    }
    if !(tolerance >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be non-negative, got {tolerance}"
        )));
    }
    let m = family.require_moments()?;
    let horizon = *checkpoints.last().unwrap() as usize;
    family.validate_horizon(horizon)?;
    normalizer.validate()?;
    let centres: Vec<T> = checkpoints.iter().map(|&n| m.mean_sum(n)).collect();
    let norms: Vec<T> = checkpoints.iter().map(|&n| normalizer.b(n)).collect::<Result<_>>()?;

    // Per replication: (deviation, S_n == 0) at each checkpoint.
    let rows: Vec<Vec<(T, bool)>> = map_indexed(replications, |r| {
        let mut buf = Vec::with_capacity(horizon);
        family.fill_values(derive_seed(master_seed, r), horizon, None, &mut buf);
        let mut sum = CompensatedSum::new();
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut next = 0;
        for (k, &x) in buf.iter().enumerate() {
            sum.add(x);
            if checkpoints[next] as usize == k + 1 {
                let s = sum.value();
                out.push(((s - centres[next]) / norms[next], s == T::zero()));
                next += 1;
                if next == checkpoints.len() {
                    break;
                }
            }
        }
        out
    });

    let reps = T::from_count(replications);
    let per_checkpoint = checkpoints
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            let mut devs: Vec<T> = rows.iter().map(|row| row[c].0).collect();
            let (mean, var) = crate::stats::mean_var(&devs);
            let within = devs.iter().filter(|d| d.abs() <= tolerance).count() as u64;
            let zeros = rows.iter().filter(|row| row[c].1).count() as u64;
            let mut abs: Vec<T> = devs.iter().map(|d| d.abs()).collect();
            sort_values(&mut devs);
            sort_values(&mut abs);
            CheckpointStats {
                checkpoint: n,
                mean_dev: mean,
                stddev: var.sqrt(),
                q05: quantile_sorted(&devs, T::lit(0.05)),
                q50: quantile_sorted(&devs, T::lit(0.5)),
                q95: quantile_sorted(&devs, T::lit(0.95)),
                frac_within_tol: T::from_count(within) / reps,
                median_abs_dev: quantile_sorted(&abs, T::lit(0.5)),
                frac_exact_zero: T::from_count(zeros) / reps,
            }
        })
        .collect();
    Ok(ExperimentResult {
        descriptor: family.descriptor().clone(),
        normalizer: normalizer.clone(),
        master_seed,
        replications,
        tolerance,
        checkpoints: checkpoints.to_vec(),
        per_checkpoint,
        runtime_ms: started.elapsed().as_millis() as u64,
    })
}

/// Events on one sampled path, evaluated at a fixed `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSpec {
    /// `S_n − E S_n >= multiple·n`.
    CenteredSumGeq { multiple: f64 },
    /// `|S_n/n − center| > delta`.
    ScaledMeanOutside { center: f64, delta: f64 },
    /// `X_index > threshold`.
    ValueAbove { index: u64, threshold: f64 },
    /// `target` given `condition`.
    Conditional {
        condition: Box<EventSpec>,
        target: Box<EventSpec>,
    },
}

impl EventSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            EventSpec::CenteredSumGeq { multiple } => {
                if !multiple.is_finite() {
                    return Err(Error::InvalidParams(format!(
                        "threshold multiple {multiple} is not finite"
                    )));
                }
            }
            EventSpec::ScaledMeanOutside { center, delta } => {
                if !center.is_finite() || !(*delta > 0.0) || !delta.is_finite() {
                    return Err(Error::InvalidParams(format!(
                        "scaled_mean_outside needs finite center and delta > 0, got ({center}, {delta})"
                    )));
                }
            }
            EventSpec::ValueAbove { index, threshold } => {
                if *index == 0 || !threshold.is_finite() {
                    return Err(Error::InvalidParams(format!(
                        "value_above needs index >= 1 and a finite threshold, got ({index}, {threshold})"
                    )));
                }
            }
            EventSpec::Conditional { condition, target } => {
                if matches!(**condition, EventSpec::Conditional { .. })
                    || matches!(**target, EventSpec::Conditional { .. })
                {
                    return Err(Error::InvalidParams("conditional events cannot nest".into()));
                }
                condition.validate()?;
                target.validate()?;
            }
        }
        Ok(())
    }

    fn needs_mean(&self) -> bool {
        match self {
            EventSpec::CenteredSumGeq { .. } => true,
            EventSpec::Conditional { condition, target } => condition.needs_mean() || target.needs_mean(),
            _ => false,
        }
    }

    fn horizon(&self, n: u64) -> u64 {
        match self {
            EventSpec::ValueAbove { index, .. } => *index,
            EventSpec::Conditional { condition, target } => condition.horizon(n).max(target.horizon(n)),
            _ => n,
        }
    }

    fn occurs<T: Scalar>(&self, values: &[T], s_n: T, mean_n: T, n: u64) -> bool {
        let nf = T::from_count(n);
        match self {
            EventSpec::CenteredSumGeq { multiple } => s_n - mean_n >= T::lit(*multiple) * nf,
            EventSpec::ScaledMeanOutside { center, delta } => (s_n / nf - T::lit(*center)).abs() > T::lit(*delta),
            EventSpec::ValueAbove { index, threshold } => values[*index as usize - 1] > T::lit(*threshold),
            EventSpec::Conditional { target, .. } => target.occurs(values, s_n, mean_n, n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventEstimate<T> {
    pub p_hat: T,
    pub stderr: T,
    pub ci95: Interval<T>,
    /// Samples in which the (target) event occurred.
    pub hits: u64,
    /// Samples counted in the denominator: all samples, or those meeting the condition.
    pub trials: u64,
    pub samples: u64,
}

/// Bernoulli estimate of an event at `n` with a Wilson interval; conditional
/// events use the ratio estimator with delta-method standard error.
pub fn estimate_event_probability<T: Scalar>(
    family: &SequenceFamily<T>,
    event: &EventSpec,
    n: u64,
    samples: u64,
    seed: u64,
) -> Result<EventEstimate<T>> {
    event.validate()?;
    if samples < MIN_EVENT_SAMPLES {
        return Err(Error::InsufficientReplications {
            min: MIN_EVENT_SAMPLES,
            got: samples,
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let mean_n = if event.needs_mean() {
        family.require_moments()?.mean_sum(n)
    } else {
        T::zero()
    };
    let horizon = event.horizon(n).max(n) as usize;
    family.validate_horizon(horizon)?;
    let counts = map_blocks(samples, |range| {
        let mut buf = Vec::with_capacity(horizon);
        let (mut cond, mut hit) = (0u64, 0u64);
        for r in range {
            family.fill_values(derive_seed(seed, r), horizon, None, &mut buf);
            let s_n = crate::stats::compensated_sum(buf[..n as usize].iter().copied());
            let c = match event {
                EventSpec::Conditional { condition, .. } => condition.occurs(&buf, s_n, mean_n, n),
                _ => true,
            };
            if c {
                cond += 1;
                hit += event.occurs(&buf, s_n, mean_n, n) as u64;
            }
        }
        (cond, hit)
    });
    let (cond, hits) = counts.iter().fold((0, 0), |(a, b), &(c, h)| (a + c, b + h));
    if cond == 0 {
        return Err(Error::EmptyCondition { samples });
    }
    let prop: Proportion<T> = Proportion::from_counts(hits, cond);
    Ok(EventEstimate {
        p_hat: prop.p_hat,
        stderr: prop.stderr,
        ci95: prop.ci95,
        hits,
        trials: cond,
        samples,
    })
}

/// Exact `P(Σ_{k<=n} X̃_k >= n/2)` for independent `X̃_k = ±k/2`, each sign
/// with probability ½.
///
/// Doubling every value puts all sums on the integers `−n(n+1)/2..=n(n+1)/2`;
/// the dynamic program counts sign patterns per sum, and the result is the
/// dyadic rational `count / 2^n`.
pub fn exact_step_deviation(n: u64) -> Result<Ratio<u128>> {
    if n == 0 || n > MAX_EXACT_STEP_N {
        return Err(Error::NTooLarge {
            n,
            max: MAX_EXACT_STEP_N,
        });
    }
    let reach = (n * (n + 1) / 2) as usize;
    // counts[v + reach] = number of sign patterns with doubled sum v.
    let mut counts = vec![0u128; 2 * reach + 1];
    counts[reach] = 1;
    let mut span = 0usize;
    for k in 1..=n as usize {
        let mut next = vec![0u128; 2 * reach + 1];
        for v in (reach - span)..=(reach + span) {
            let c = counts[v];
            if c != 0 {
                next[v + k] += c;
                next[v - k] += c;
            }
        }
        counts = next;
        span += k;
    }
    let threshold = reach + n as usize;
    let favourable: u128 = counts.iter().skip(threshold).sum();
    Ok(Ratio::new(favourable, 1u128 << n))
}

/// [`exact_step_deviation`] as a float.
pub fn exact_step_deviation_f64(n: u64) -> Result<f64> {
    let r = exact_step_deviation(n)?;
    Ok(*r.numer() as f64 / *r.denom() as f64)
}

/// Pair of events probed by [`dependence_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Probe {
    /// `{X > threshold}`.
    Sign {
        #[serde(default)]
        threshold: f64,
    },
    /// `{X > esssup X − epsilon}`.
    NearMax { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport<T> {
    pub i: u64,
    pub j: u64,
    pub p_joint: T,
    pub p_i: T,
    pub p_j: T,
    /// `P(B_j | A_i)`.
    pub p_cond: T,
    pub p_cond_stderr: T,
    /// `p_joint − p_i·p_j`.
    pub independence_gap: T,
    pub gap_stderr: T,
    pub samples: u64,
}

/// Joint, marginal and conditional frequencies of the probe events at
/// coordinates `i` and `j`.
pub fn dependence_probe<T: Scalar>(
    family: &SequenceFamily<T>,
    i: u64,
    j: u64,
    probe: Probe,
    samples: u64,
    seed: u64,
) -> Result<DependenceReport<T>> {
    if i == j || i == 0 || j == 0 {
        return Err(Error::InvalidArgument(format!(
            "need distinct positive indices, got ({i}, {j})"
        )));
    }
    if samples < MIN_PROBE_SAMPLES {
        return Err(Error::InsufficientReplications {
            min: MIN_PROBE_SAMPLES,
            got: samples,
        });
    }
    let (ti, tj) = match probe {
        Probe::Sign { threshold } => {
            if !threshold.is_finite() {
                return Err(Error::InvalidParams(format!("threshold {threshold} is not finite")));
            }
            (T::lit(threshold), T::lit(threshold))
        }
        Probe::NearMax { epsilon } => {
            if !(epsilon > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "near_max epsilon must be positive, got {epsilon}"
                )));
            }
            let m = family.require_moments()?;
            let (si, sj) = (m.esssup(i), m.esssup(j));
            if !si.is_finite() || !sj.is_finite() {
                return Err(Error::MomentsUnavailable(
                    "near_max needs a finite essential supremum".into(),
                ));
            }
            (si - T::lit(epsilon), sj - T::lit(epsilon))
        }
    };
    let horizon = i.max(j) as usize;
    family.validate_horizon(horizon)?;
    // Counts of (A∩B, A∖B, B∖A).
    let parts = map_blocks(samples, |range| {
        let mut buf = Vec::with_capacity(horizon);
        let mut c = [0u64; 3];
        for r in range {
            family.fill_values(derive_seed(seed, r), horizon, None, &mut buf);
            let a = buf[i as usize - 1] > ti;
            let b = buf[j as usize - 1] > tj;
            match (a, b) {
                (true, true) => c[0] += 1,
                (true, false) => c[1] += 1,
                (false, true) => c[2] += 1,
                _ => {}
            }
        }
        c
    });
    let c = parts
        .iter()
        .fold([0u64; 3], |acc, p| [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]);
    let count_a = c[0] + c[1];
    if count_a == 0 {
        return Err(Error::EmptyCondition { samples });
    }
    let nf = T::from_count(samples);
    let p_ab = T::from_count(c[0]) / nf;
    let p_a = T::from_count(count_a) / nf;
    let p_b = T::from_count(c[0] + c[2]) / nf;
    let p_cond = T::from_count(c[0]) / T::from_count(count_a);
    let p_cond_stderr = (p_cond * (T::one() - p_cond) / T::from_count(count_a)).sqrt();
    // Influence function of p_ab − p_a·p_b: g = 1{AB} − p_b·1{A} − p_a·1{B}.
    let g_ab = T::one() - p_b - p_a;
    let g_a = -p_b;
    let g_b = -p_a;
    let f = |k: u64| T::from_count(k) / nf;
    let eg = f(c[0]) * g_ab + f(c[1]) * g_a + f(c[2]) * g_b;
    let eg2 = f(c[0]) * g_ab * g_ab + f(c[1]) * g_a * g_a + f(c[2]) * g_b * g_b;
    let gap_stderr = ((eg2 - eg * eg).max(T::zero()) / nf).sqrt();
    Ok(DependenceReport {
        i,
        j,
        p_joint: p_ab,
        p_i: p_a,
        p_j: p_b,
        p_cond,
        p_cond_stderr,
        independence_gap: p_ab - p_a * p_b,
        gap_stderr,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevEmpirical<T> {
    pub n: u64,
    pub delta: T,
    /// `P̂(|S_n − E S_n| > nδ)`.
    pub p_hat: T,
    pub stderr: T,
    /// `V(S_n) / (n²δ²)`.
    pub bound: T,
    pub variance: T,
    /// `analytic` or `sample`.
    pub variance_source: String,
    pub holds_within_noise: bool,
}

/// Two-sided deviation frequency at `n` against the Chebyshev bound.
pub fn chebyshev_empirical<T: Scalar>(
    family: &SequenceFamily<T>,
    n: u64,
    delta: T,
    samples: u64,
    seed: u64,
) -> Result<ChebyshevEmpirical<T>> {
    if !(delta > T::zero()) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if samples < MIN_EVENT_SAMPLES {
        return Err(Error::InsufficientReplications {
            min: MIN_EVENT_SAMPLES,
            got: samples,
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let m = family.require_moments()?;
    family.validate_horizon(n as usize)?;
    let centre = m.mean_sum(n);
    let threshold = T::from_count(n) * delta;
    let parts = map_blocks(samples, |range| {
        let mut buf = Vec::with_capacity(n as usize);
        let mut hits = 0u64;
        let mut mom = RunningMoments::new();
        for r in range {
            family.fill_values(derive_seed(seed, r), n as usize, None, &mut buf);
            let s = crate::stats::compensated_sum(buf.iter().copied());
            hits += ((s - centre).abs() > threshold) as u64;
            mom.push(s);
        }
        (hits, mom)
    });
    let mut hits = 0;
    let mut mom = RunningMoments::new();
    for (h, m) in &parts {
        hits += h;
        mom.merge(m);
    }
    let (variance, source) = match m.sum_variance(n) {
        Some(v) => (v, "analytic"),
        None => (mom.variance(), "sample"),
    };
    let prop: Proportion<T> = Proportion::from_counts(hits, samples);
    let bound = variance / (threshold * threshold);
    Ok(ChebyshevEmpirical {
        n,
        delta,
        p_hat: prop.p_hat,
        stderr: prop.stderr,
        bound,
        variance,
        variance_source: source.into(),
        holds_within_noise: prop.p_hat <= bound + T::lit(4.0) * prop.stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosPartMonteCarlo<T> {
    pub pairs: u64,
    /// `E X⁺` with `X = W·Z`.
    pub mean_pos: T,
    pub mean_pos_stderr: T,
    /// `E(Z₁⁺ Z₂⁺)` for independent standard normals (the displayed triple integral).
    pub triple_integral: T,
    pub triple_integral_stderr: T,
    /// `E(X₁⁺ X₂⁺)` with a shared gate `W`.
    pub product_pos: T,
    pub product_pos_stderr: T,
}

/// Direct simulation of the gated Gaussian positive-part moments from
/// `pairs` independent draws of `(W, Z₁, Z₂)`.
pub fn gaussian_pospart_mc<T: Scalar>(pairs: u64, seed: u64) -> Result<PosPartMonteCarlo<T>> {
    if pairs < MIN_EVENT_SAMPLES {
        return Err(Error::InsufficientReplications {
            min: MIN_EVENT_SAMPLES,
            got: pairs,
        });
    }
    // One RNG per block keeps the cost of seeding negligible.
    const PAIRS_PER_BLOCK: u64 = 1 << 14;
    let blocks = pairs.div_ceil(PAIRS_PER_BLOCK);
    let parts = map_indexed(blocks, |b| {
        let mut rng = substream(derive_seed(seed, b), Stream::Values);
        let count = PAIRS_PER_BLOCK.min(pairs - b * PAIRS_PER_BLOCK);
        let mut mean = RunningMoments::new();
        let mut triple = RunningMoments::new();
        let mut product = RunningMoments::new();
        for _ in 0..count {
            let w = if T::sample_unit(&mut rng) < T::lit(0.5) {
                T::zero()
            } else {
                T::one()
            };
            let z1 = T::sample_standard_normal(&mut rng);
            let z2 = T::sample_standard_normal(&mut rng);
            let (p1, p2) = (z1.max(T::zero()), z2.max(T::zero()));
            mean.push(w * p1);
            triple.push(p1 * p2);
            product.push(w * p1 * p2);
        }
        (mean, triple, product)
    });
    let mut mean = RunningMoments::new();
    let mut triple = RunningMoments::new();
    let mut product = RunningMoments::new();
    for (a, b, c) in &parts {
        mean.merge(a);
        triple.merge(b);
        product.merge(c);
    }
    Ok(PosPartMonteCarlo {
        pairs,
        mean_pos: mean.mean(),
        mean_pos_stderr: mean.std_error(),
        triple_integral: triple.mean(),
        triple_integral_stderr: triple.std_error(),
        product_pos: product.mean(),
        product_pos_stderr: product.std_error(),
    })
}

/// Wilson interval helper re-exported for report code.
pub fn wilson95<T: Scalar>(hits: u64, trials: u64) -> Interval<T> {
    wilson_interval(hits, trials, T::lit(Z_975))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{make_family, FamilyDescriptor, IidBase};
    use proptest::prelude::*;

    fn fam(d: FamilyDescriptor) -> SequenceFamily<f64> {
        make_family(&d).unwrap()
    }

    /// Brute-force enumeration of all 2^n sign patterns.
    fn enumerate_step(n: u64, threshold_doubled: i64) -> f64 {
        let mut good = 0u64;
        for mask in 0u64..(1 << n) {
            let s: i64 = (1..=n as i64)
                .map(|k| if mask >> (k - 1) & 1 == 1 { k } else { -k })
                .sum();
            good += (s >= threshold_doubled) as u64;
        }
        good as f64 / (1u64 << n) as f64
    }

    #[test]
    fn exact_step_small_cases() {
        assert_eq!(exact_step_deviation(1).unwrap(), Ratio::new(1, 2));
        assert_eq!(exact_step_deviation(2).unwrap(), Ratio::new(1, 4));
        for n in 1..=20 {
            let exact = exact_step_deviation_f64(n).unwrap();
            assert_eq!(exact, enumerate_step(n, n as i64), "n={n}");
        }
    }

    #[test]
    fn exact_step_at_least_quarter() {
        for n in 2..=64 {
            assert!(exact_step_deviation(n).unwrap() >= Ratio::new(1, 4), "n={n}");
        }
        assert!(matches!(
            exact_step_deviation(65),
            Err(Error::NTooLarge { n: 65, max: 64 })
        ));
        assert!(exact_step_deviation(0).is_err());
    }

    #[test]
    fn exact_step_mass_sums_to_one_at_threshold_minus_infinity() {
        // Σ over all sums of the DP counts is 2^n: compare with P(sum >= -max) = 1.
        let n = 30u64;
        let r = exact_step_deviation(n).unwrap();
        assert!(*r.numer() < *r.denom());
    }

    #[test]
    fn event_probability_matches_oracle() {
        let f = fam(FamilyDescriptor::step());
        for (k, n) in [2u64, 5, 10, 20].into_iter().enumerate() {
            let est = estimate_event_probability(
                &f,
                &EventSpec::CenteredSumGeq { multiple: 0.5 },
                n,
                100_000,
                40 + k as u64,
            )
            .unwrap();
            let exact = exact_step_deviation_f64(n).unwrap();
            assert!(
                (est.p_hat - exact).abs() <= 3.0 * est.stderr,
                "n={n}: {} vs {exact}",
                est.p_hat
            );
        }
    }

    #[test]
    fn symmetry_of_step_deviation() {
        let f = fam(FamilyDescriptor::step());
        let est = estimate_event_probability(&f, &EventSpec::CenteredSumGeq { multiple: 0.0 }, 15, 20_000, 5).unwrap();
        assert!(est.p_hat >= 0.5 - 3.0 * est.stderr);
    }

    #[test]
    fn impossible_event() {
        let f = fam(FamilyDescriptor::cosine());
        let est = estimate_event_probability(&f, &EventSpec::CenteredSumGeq { multiple: 1.5 }, 10, 2000, 1).unwrap();
        assert_eq!(est.p_hat, 0.0);
        assert_eq!(est.ci95.lo, 0.0);
    }

    #[test]
    fn gated_conditional_half_unconditional_quarter() {
        let f = fam(FamilyDescriptor::gated_gaussian());
        let cond = EventSpec::Conditional {
            condition: Box::new(EventSpec::ValueAbove {
                index: 1,
                threshold: 0.0,
            }),
            target: Box::new(EventSpec::ValueAbove {
                index: 2,
                threshold: 0.0,
            }),
        };
        let c = estimate_event_probability(&f, &cond, 2, 100_000, 9).unwrap();
        assert!((c.p_hat - 0.5).abs() < 0.02);
        let u = estimate_event_probability(
            &f,
            &EventSpec::ValueAbove {
                index: 2,
                threshold: 0.0,
            },
            2,
            100_000,
            9,
        )
        .unwrap();
        assert!((u.p_hat - 0.25).abs() < 0.02);
    }

    #[test]
    fn empty_condition_errors() {
        let f = fam(FamilyDescriptor::cosine());
        let cond = EventSpec::Conditional {
            condition: Box::new(EventSpec::ValueAbove {
                index: 1,
                threshold: 2.0,
            }),
            target: Box::new(EventSpec::ValueAbove {
                index: 2,
                threshold: 0.0,
            }),
        };
        assert!(matches!(
            estimate_event_probability(&f, &cond, 2, 1000, 1),
            Err(Error::EmptyCondition { .. })
        ));
    }

    #[test]
    fn event_json() {
        let e: EventSpec = serde_json::from_str(
            r#"{"kind":"conditional","condition":{"kind":"value_above","index":1,"threshold":0},"target":{"kind":"value_above","index":2,"threshold":0}}"#,
        )
        .unwrap();
        assert!(e.validate().is_ok());
        assert!(EventSpec::ScaledMeanOutside {
            center: 0.0,
            delta: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn lln_constant_family_zero_deviation() {
        for c in [1.0, 0.3, 2.5] {
            let f = fam(FamilyDescriptor::constant(c));
            let r = run_lln_experiment(&f, &NormalizerSpec::Linear, &[1, 10, 1000, 10_000], 30, 0.0, 1).unwrap();
            for cp in &r.per_checkpoint {
                assert_eq!(cp.mean_dev, 0.0, "c={c} n={}", cp.checkpoint);
                assert_eq!(cp.stddev, 0.0);
                assert_eq!(cp.frac_within_tol, 1.0);
            }
        }
    }

    #[test]
    fn lln_gated_mixture_atom() {
        let f = fam(FamilyDescriptor::gated_gaussian());
        let r = run_lln_experiment(&f, &NormalizerSpec::Linear, &[10, 100, 1000], 10_000, 0.05, 2).unwrap();
        for cp in &r.per_checkpoint {
            assert!((cp.frac_exact_zero - 0.5).abs() <= 0.02, "{cp:?}");
            assert!(cp.q05 <= cp.q50 && cp.q50 <= cp.q95);
        }
        let meds: Vec<f64> = r.per_checkpoint.iter().map(|c| c.median_abs_dev).collect();
        assert!(meds[2] < meds[0]);
    }

    #[test]
    fn lln_checkpoint_errors() {
        let f = fam(FamilyDescriptor::cosine());
        let lin = NormalizerSpec::Linear;
        assert!(matches!(
            run_lln_experiment(&f, &lin, &[10, 5], 30, 0.1, 0),
            Err(Error::CheckpointUnsorted)
        ));
        assert!(matches!(
            run_lln_experiment(&f, &lin, &[0, 5], 30, 0.1, 0),
            Err(Error::CheckpointUnsorted)
        ));
        assert!(matches!(
            run_lln_experiment(&f, &lin, &[5], 29, 0.1, 0),
            Err(Error::InsufficientReplications { .. })
        ));
        let g = fam(FamilyDescriptor::gated_gaussian().with(crate::families::Transform::Truncate));
        assert!(matches!(
            run_lln_experiment(&g, &lin, &[5], 30, 0.1, 0),
            Err(Error::MomentsUnavailable(_))
        ));
    }

    #[test]
    fn lln_thread_independent() {
        let f = fam(FamilyDescriptor::gated_gaussian());
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_lln_experiment(&f, &NormalizerSpec::Linear, &[10, 200], 500, 0.1, 123).unwrap())
        };
        assert_eq!(run(1), run(5));
    }

    #[test]
    fn dependence_gated_sign() {
        let f = fam(FamilyDescriptor::gated_gaussian());
        let r = dependence_probe(&f, 1, 2, Probe::Sign { threshold: 0.0 }, 100_000, 3).unwrap();
        assert!((r.independence_gap - 0.0625).abs() <= 3.0 * r.gap_stderr, "{r:?}");
        assert!((r.p_cond - 0.5).abs() < 0.02);
    }

    #[test]
    fn dependence_iid_exponential_independent() {
        let f = fam(FamilyDescriptor::exponential(1.0));
        let r = dependence_probe(&f, 3, 7, Probe::Sign { threshold: 1.0 }, 100_000, 3).unwrap();
        assert!(r.independence_gap.abs() <= 3.0 * r.gap_stderr, "{r:?}");
    }

    #[test]
    fn dependence_cosine_near_max() {
        let f = fam(FamilyDescriptor::cosine());
        let r = dependence_probe(&f, 1, 2, Probe::NearMax { epsilon: 0.05 }, 1_000_000, 3).unwrap();
        assert!(r.independence_gap.abs() > 4.0 * r.gap_stderr);
        // Midpoint rule over the latent X on [-1, 1] as the oracle.
        let grid = 2_000_000;
        let (mut pa, mut pab) = (0.0, 0.0);
        for k in 0..grid {
            let x = -1.0 + (k as f64 + 0.5) * 2.0 / grid as f64;
            let a = (2.0 * std::f64::consts::PI * x).cos() > 0.95;
            let b = (4.0 * std::f64::consts::PI * x).cos() > 0.95;
            pa += a as u8 as f64;
            pab += (a && b) as u8 as f64;
        }
        pa /= grid as f64;
        pab /= grid as f64;
        let theta = (0.95f64).acos() / std::f64::consts::PI;
        assert!((pa - theta).abs() < 1e-5);
        assert!((r.p_i - pa).abs() < 4.0 * (pa * (1.0 - pa) / 1e6).sqrt());
        assert!((r.p_joint - pab).abs() < 4.0 * (pab * (1.0 - pab) / 1e6).sqrt());
    }

    #[test]
    fn dependence_errors() {
        let f = fam(FamilyDescriptor::cosine());
        assert!(dependence_probe(&f, 2, 2, Probe::Sign { threshold: 0.0 }, 10_000, 0).is_err());
        assert!(dependence_probe(&f, 1, 2, Probe::Sign { threshold: 0.0 }, 9_999, 0).is_err());
        assert!(matches!(
            dependence_probe(&f, 1, 2, Probe::Sign { threshold: 5.0 }, 10_000, 0),
            Err(Error::EmptyCondition { .. })
        ));
        let g = fam(FamilyDescriptor::gated_gaussian());
        assert!(dependence_probe(&g, 1, 2, Probe::NearMax { epsilon: 0.1 }, 10_000, 0).is_err());
    }

    #[test]
    fn chebyshev_cosine_example() {
        let f = fam(FamilyDescriptor::cosine());
        let r = chebyshev_empirical(&f, 100, 0.2, 20_000, 1).unwrap();
        assert!((r.bound - 0.125).abs() < 1e-12);
        assert!(r.holds_within_noise);
    }

    #[test]
    fn chebyshev_step_two() {
        let f = fam(FamilyDescriptor::step());
        let r = chebyshev_empirical(&f, 2, 0.5, 100_000, 2).unwrap();
        assert!((r.bound - 1.25).abs() < 1e-12);
        assert!((r.p_hat - 0.5).abs() < 4.0 * r.stderr);
        assert!(r.holds_within_noise);
    }

    #[test]
    fn chebyshev_huge_delta() {
        let f = fam(FamilyDescriptor::iid(IidBase::Uniform { a: 0.0, b: 1.0 }));
        let r = chebyshev_empirical(&f, 50, 1e6, 1000, 2).unwrap();
        assert_eq!(r.p_hat, 0.0);
        assert!(r.bound >= 0.0);
    }

    #[test]
    fn pospart_mc_agrees_with_quadrature() {
        let q = crate::quadrature::gaussian_pospart_moments::<f64>().unwrap();
        let mc = gaussian_pospart_mc::<f64>(1_000_000, 7).unwrap();
        assert!((mc.mean_pos - q.mean_pos).abs() < 4.0 * mc.mean_pos_stderr);
        assert!((mc.triple_integral - q.triple_integral).abs() < 4.0 * mc.triple_integral_stderr);
        assert!((mc.product_pos - q.product_pos).abs() < 4.0 * mc.product_pos_stderr);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn quantiles_ordered_and_fractions_valid(seed in any::<u64>(), tol in 0.0f64..1.0) {
            let f = fam(FamilyDescriptor::cosine());
            let r = run_lln_experiment(&f, &NormalizerSpec::Linear, &[1, 7, 50], 40, tol, seed).unwrap();
            prop_assert_eq!(r.replications, 40);
            for cp in &r.per_checkpoint {
                prop_assert!(cp.q05 <= cp.q50 && cp.q50 <= cp.q95);
                prop_assert!((0.0..=1.0).contains(&cp.frac_within_tol));
            }
        }

        #[test]
        fn chebyshev_dominance(seed in any::<u64>(), n in 1u64..60, delta in 0.05f64..2.0, which in 0usize..4) {
            let d = [
                FamilyDescriptor::cosine(),
                FamilyDescriptor::gated_gaussian(),
                FamilyDescriptor::exponential(1.0),
                FamilyDescriptor::step(),
            ][which].clone();
            let f = fam(d);
            let r = chebyshev_empirical(&f, n, delta, 2000, seed).unwrap();
            prop_assert!(r.holds_within_noise, "{:?}", r);
        }
    }
}
