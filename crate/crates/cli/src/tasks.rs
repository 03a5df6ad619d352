//! Task dispatch: one config in, a result JSON plus CSV tables out.

use llnlab_core::conditions::{
    basel_tail_bound, cg_tail_family, kolmogorov_series_family, mean_abs_deviation_rate, quasi_uncorrelation_ratio,
    scaled_mean_sup, truncation_gap_report, McFallback, NormalizerSpec, RatioReport, SeriesReport,
};
use llnlab_core::families::{make_family, FamilyKind, SequenceFamily};
use llnlab_core::montecarlo::{
    chebyshev_empirical, dependence_probe, estimate_event_probability, exact_step_deviation, gaussian_pospart_mc,
    run_lln_experiment, EventSpec,
};
use llnlab_core::proofkit::{build_index_for_family, chebyshev_report, kappa_report, outer_slacks, sandwich_suite};
use llnlab_core::quadrature::{cosine_moment, gaussian_pospart_moments, integrate_1d, triple_integral_nested};
use llnlab_core::report::{experiment_table, fmt_num, kappa_table, ratio_table, series_table, Table};
use llnlab_core::rng::derive_seed;
use llnlab_core::scalar::normal_pdf;
use llnlab_core::{FamilyDescriptor, SubsequenceIndex};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    BuiltinFunction, CheckParams, DirectChebyshev, IntegrateParams, OracleParams, ProofParams, SimulateParams,
    SlackPath, TaskParams,
};
use crate::CliError;

type Out<T> = Result<T, CliError>;

pub struct TaskOutput {
    pub result: Value,
    /// `(file stem, table)` in write order.
    pub tables: Vec<(String, Table)>,
}

fn to_value<S: Serialize>(s: &S) -> Value {
    serde_json::to_value(s).expect("report types serialize")
}

fn f(x: f64) -> String {
    fmt_num(x)
}

/// Runs `params` over every family (or once, family-free).
pub fn run_task(
    params: &TaskParams,
    families: &[FamilyDescriptor],
    normalizer: &NormalizerSpec<f64>,
    seed: u64,
) -> Out<TaskOutput> {
    let built: Vec<SequenceFamily<f64>> = families
        .iter()
        .map(make_family)
        .collect::<llnlab_core::Result<_>>()
        .map_err(|e| CliError::Config(format!("family: {e}")))?;
    if built.is_empty() {
        return run_one(params, None, normalizer, seed);
    }
    if built.len() == 1 {
        return run_one(params, Some(&built[0]), normalizer, seed);
    }
    let mut results = Vec::new();
    let mut tables = Vec::new();
    for (i, fam) in built.iter().enumerate() {
        let out = run_one(params, Some(fam), normalizer, seed)?;
        let mut r = out.result;
        if let Value::Object(m) = &mut r {
            m.insert("family".into(), json!(fam.descriptor().display_label()));
        }
        results.push(r);
        tables.extend(out.tables.into_iter().map(|(stem, t)| (format!("{stem}_{i}"), t)));
    }
    Ok(TaskOutput {
        result: json!({ "results": results }),
        tables,
    })
}

fn run_one(
    params: &TaskParams,
    family: Option<&SequenceFamily<f64>>,
    normalizer: &NormalizerSpec<f64>,
    seed: u64,
) -> Out<TaskOutput> {
    let need = || family.ok_or_else(|| CliError::Config("this task needs a family".into()));
    match params {
        TaskParams::Simulate(p) => simulate(p, family, normalizer, seed),
        TaskParams::Check(p) => check(p, family, normalizer, seed),
        TaskParams::Proof(p) => proof(p, need()?, normalizer, seed),
        TaskParams::Integrate(p) => integrate(p, seed),
        TaskParams::Oracle(p) => oracle(p, seed),
    }
}

fn simulate(
    p: &SimulateParams,
    family: Option<&SequenceFamily<f64>>,
    normalizer: &NormalizerSpec<f64>,
    seed: u64,
) -> Out<TaskOutput> {
    let need = || family.ok_or_else(|| CliError::Config("this operation needs a family".into()));
    match p {
        SimulateParams::Lln {
            checkpoints,
            replications,
            tolerance,
        } => {
            let r = run_lln_experiment(need()?, normalizer, checkpoints, *replications, *tolerance, seed)?;
            Ok(TaskOutput {
                result: to_value(&r),
                tables: vec![("experiment".into(), experiment_table(&r))],
            })
        }
        SimulateParams::Events { n, samples, events } => {
            let fam = need()?;
            let mut t = Table::new(&["name", "p_hat", "stderr", "ci_lo", "ci_hi", "hits", "trials"]);
            let mut rows = Vec::new();
            for e in events {
                // Common random numbers: every event sees the same trajectories.
                let est = estimate_event_probability(fam, &e.event, *n, *samples, seed)?;
                t.push(vec![
                    e.name.clone(),
                    f(est.p_hat),
                    f(est.stderr),
                    f(est.ci95.lo),
                    f(est.ci95.hi),
                    est.hits.to_string(),
                    est.trials.to_string(),
                ]);
                let mut v = to_value(&est);
                v["name"] = json!(e.name);
                v["event"] = to_value(&e.event);
                rows.push(v);
            }
            Ok(TaskOutput {
                result: json!({ "n": n, "events": rows }),
                tables: vec![("events".into(), t)],
            })
        }
        SimulateParams::Dependence { i, j, probe, samples } => {
            let r = dependence_probe(need()?, *i, *j, *probe, *samples, seed)?;
            let mut t = Table::new(&[
                "i",
                "j",
                "p_joint",
                "p_i",
                "p_j",
                "p_cond",
                "independence_gap",
                "gap_stderr",
            ]);
            t.push(vec![
                i.to_string(),
                j.to_string(),
                f(r.p_joint),
                f(r.p_i),
                f(r.p_j),
                f(r.p_cond),
                f(r.independence_gap),
                f(r.gap_stderr),
            ]);
            let mut v = to_value(&r);
            v["probe"] = to_value(probe);
            v["gap_z"] = json!(if r.gap_stderr > 0.0 {
                r.independence_gap / r.gap_stderr
            } else {
                0.0
            });
            Ok(TaskOutput {
                result: v,
                tables: vec![("dependence".into(), t)],
            })
        }
        SimulateParams::Chebyshev { ns, deltas, samples } => {
            let (v, t) = chebyshev_grid(
                need()?,
                &DirectChebyshev {
                    ns: ns.clone(),
                    deltas: deltas.clone(),
                    samples: *samples,
                },
                seed,
            )?;
            Ok(TaskOutput {
                result: v,
                tables: vec![("chebyshev".into(), t)],
            })
        }
        SimulateParams::PospartMc { pairs } => {
            let (v, t) = pospart_cross_check(*pairs, seed)?;
            Ok(TaskOutput {
                result: v,
                tables: vec![("pospart_mc".into(), t)],
            })
        }
    }
}

fn chebyshev_grid(fam: &SequenceFamily<f64>, p: &DirectChebyshev, seed: u64) -> Out<(Value, Table)> {
    let mut t = Table::new(&["n", "delta", "p_hat", "stderr", "bound", "holds_within_noise"]);
    let mut cases = Vec::new();
    let mut k = 0;
    for &n in &p.ns {
        for &delta in &p.deltas {
            let r = chebyshev_empirical(fam, n, delta, p.samples, derive_seed(seed, k))?;
            k += 1;
            t.push(vec![
                n.to_string(),
                f(delta),
                f(r.p_hat),
                f(r.stderr),
                f(r.bound),
                r.holds_within_noise.to_string(),
            ]);
            cases.push(r);
        }
    }
    let all_hold = cases.iter().all(|c| c.holds_within_noise);
    Ok((json!({ "cases": to_value(&cases), "all_hold": all_hold }), t))
}

fn pospart_cross_check(pairs: u64, seed: u64) -> Out<(Value, Table)> {
    let q = gaussian_pospart_moments::<f64>()?;
    let mc = gaussian_pospart_mc::<f64>(pairs, seed)?;
    let z = |est: f64, se: f64, exact: f64| if se > 0.0 { (est - exact) / se } else { 0.0 };
    let rows = [
        ("mean_pos", q.mean_pos, mc.mean_pos, mc.mean_pos_stderr),
        (
            "triple_integral",
            q.triple_integral,
            mc.triple_integral,
            mc.triple_integral_stderr,
        ),
        ("product_pos", q.product_pos, mc.product_pos, mc.product_pos_stderr),
    ];
    let mut t = Table::new(&["quantity", "quadrature", "monte_carlo", "stderr", "z"]);
    let mut zs = serde_json::Map::new();
    for (name, exact, est, se) in rows {
        let zv = z(est, se, exact);
        t.push(vec![name.into(), f(exact), f(est), f(se), f(zv)]);
        zs.insert(format!("{name}_z"), json!(zv));
    }
    let v = json!({
        "pairs": pairs,
        "monte_carlo": to_value(&mc),
        "quadrature": { "mean_pos": q.mean_pos, "triple_integral": q.triple_integral, "product_pos": q.product_pos },
        "z": zs,
    });
    Ok((v, t))
}

fn series_summary<T: Serialize>(r: &SeriesReport<f64>, extra: T) -> Value {
    let max_partial = r.partial_sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    json!({
        "verdict": r.verdict.as_str(),
        "verdict_basis": to_value(&r.verdict_basis),
        "horizon": r.horizon,
        "final_partial_sum": r.partial_sums.last().copied(),
        "max_partial_sum": max_partial,
        "first_term": r.terms.first().copied(),
        "last_term": r.terms.last().copied(),
        "extra": to_value(&extra),
    })
}

fn ratio_summary(r: &RatioReport<f64>) -> Value {
    to_value(r)
}

fn check(
    p: &CheckParams,
    family: Option<&SequenceFamily<f64>>,
    normalizer: &NormalizerSpec<f64>,
    seed: u64,
) -> Out<TaskOutput> {
    let need = || family.ok_or_else(|| CliError::Config("this condition needs a family".into()));
    match p {
        CheckParams::Kolmogorov { horizon } => {
            let r = kolmogorov_series_family(need()?, normalizer, *horizon)?;
            Ok(TaskOutput {
                result: series_summary(&r, json!({ "normalizer": to_value(normalizer) })),
                tables: vec![("series".into(), series_table(&r))],
            })
        }
        CheckParams::Uncorrelation {
            max_index,
            n_grid,
            replications,
        } => {
            let fam = need()?;
            let (pairs, table) = pair_covariances(fam, *max_index)?;
            let ratio = quasi_uncorrelation_ratio(fam, n_grid, *replications, seed)?;
            let mut v = pairs;
            v["ratio"] = ratio_summary(&ratio);
            Ok(TaskOutput {
                result: v,
                tables: vec![("pairs".into(), table), ("ratio".into(), ratio_table(&ratio))],
            })
        }
        CheckParams::QuasiUncorrelation { n_grid, replications } => {
            let r = quasi_uncorrelation_ratio(need()?, n_grid, *replications, seed)?;
            Ok(TaskOutput {
                result: ratio_summary(&r),
                tables: vec![("ratio".into(), ratio_table(&r))],
            })
        }
        CheckParams::ScaledMean {
            horizon,
            fallback_replications,
        } => {
            let fb = fallback_replications.map(|replications| McFallback { replications, seed });
            let r = scaled_mean_sup(need()?, normalizer, *horizon, fb)?;
            let mut t = Table::new(&["n", "scaled_mean"]);
            for (k, v) in r.series.iter().enumerate() {
                t.push(vec![(k + 1).to_string(), f(*v)]);
            }
            Ok(TaskOutput {
                result: json!({
                    "a_hat": r.a_hat,
                    "argmax_n": r.argmax_n,
                    "source": r.source,
                    "growth_flag": r.growth_flag,
                    "horizon": r.horizon,
                }),
                tables: vec![("scaled_mean".into(), t)],
            })
        }
        CheckParams::CgTail {
            t_max,
            tolerance,
            sup_horizons,
        } => {
            let r = cg_tail_family(need()?, *t_max, *tolerance, sup_horizons)?;
            let mut t = Table::new(&["sup_horizon", "value", "truncation_bound", "total", "diverges"]);
            for ((n, rep), total) in r.by_sup_horizon.iter().zip(&r.totals) {
                t.push(vec![
                    n.to_string(),
                    f(rep.value),
                    f(rep.truncation_bound),
                    f(*total),
                    rep.diverges.to_string(),
                ]);
            }
            Ok(TaskOutput {
                result: to_value(&r),
                tables: vec![("cg_tail".into(), t)],
            })
        }
        CheckParams::MeanAbsDeviation { horizon, replications } => {
            let r = mean_abs_deviation_rate(need()?, *horizon, *replications, seed)?;
            let mut t = Table::new(&["n", "mean_abs_deviation"]);
            for (k, v) in r.terms.iter().enumerate() {
                t.push(vec![(k + 1).to_string(), f(*v)]);
            }
            Ok(TaskOutput {
                result: series_summary(&r, Value::Null),
                tables: vec![("mad".into(), t)],
            })
        }
        CheckParams::Truncation { horizon, replications } => {
            let r = truncation_gap_report(need()?, *horizon, *replications, seed)?;
            let mut t = Table::new(&[
                "n",
                "l1_gap",
                "l1_gap_stderr",
                "mismatch_prob_partial_sum",
                "cesaro_gap",
            ]);
            for k in 0..r.l1_gaps.len() {
                t.push(vec![
                    (k + 1).to_string(),
                    f(r.l1_gaps[k]),
                    f(r.l1_gap_stderrs[k]),
                    f(r.mismatch_prob_partial_sums[k]),
                    f(r.cesaro_gap[k]),
                ]);
            }
            let mut v = to_value(&r);
            v["max_abs_l1_gap"] = json!(r.l1_gaps.iter().fold(0.0f64, |a, g| a.max(g.abs())));
            v["final_mismatch_partial_sum"] = json!(r.mismatch_prob_partial_sums.last().copied());
            Ok(TaskOutput {
                result: v,
                tables: vec![("truncation".into(), t)],
            })
        }
        CheckParams::Basel { k_max } => {
            if *k_max == 0 {
                return Err(CliError::Config("k_max must be at least 1".into()));
            }
            let mut t = Table::new(&["k", "tail_value", "bound", "holds"]);
            let mut all_hold = true;
            let mut min_margin = f64::INFINITY;
            let mut gap_k1 = f64::NAN;
            for k in 1..=*k_max {
                let r = basel_tail_bound::<f64>(k)?;
                all_hold &= r.holds;
                min_margin = min_margin.min(r.bound - r.tail_value);
                if k == 1 {
                    gap_k1 = (r.bound - r.tail_value).abs();
                }
                t.push(vec![k.to_string(), f(r.tail_value), f(r.bound), r.holds.to_string()]);
            }
            Ok(TaskOutput {
                result: json!({ "k_max": k_max, "all_hold": all_hold, "equality_gap_k1": gap_k1, "min_margin": min_margin }),
                tables: vec![("basel".into(), t)],
            })
        }
    }
}

/// Covariances on `1 <= i <= j <= max_index`. The cosine family goes through
/// quadrature with the product-to-sum value alongside; other families use
/// their analytic covariance structure.
fn pair_covariances(fam: &SequenceFamily<f64>, max_index: u64) -> Out<(Value, Table)> {
    let d = fam.descriptor();
    let plain_cosine = matches!(d.kind, FamilyKind::Cosine) && d.transforms.is_empty();
    let m = fam.require_moments()?;
    let mut t = Table::new(&["i", "j", "covariance", "reference"]);
    let (mut max_off, mut max_diag_dev, mut max_ref_gap) = (0.0f64, 0.0f64, 0.0f64);
    let mut diagonal = Vec::new();
    for i in 1..=max_index {
        for j in i..=max_index {
            let (cov, reference) = if plain_cosine {
                let c = cosine_moment::<f64>(i, j)?;
                (c.quadrature.value, c.analytic)
            } else {
                let c = if i == j { Some(m.var(i)) } else { m.pair_cov(i, j) };
                let c = c.ok_or_else(|| CliError::Runtime("pair covariance unavailable".into()))?;
                (c, c)
            };
            max_ref_gap = max_ref_gap.max((cov - reference).abs());
            if i == j {
                max_diag_dev = max_diag_dev.max((cov - m.var(i)).abs());
                diagonal.push(cov);
            } else {
                max_off = max_off.max(cov.abs());
            }
            t.push(vec![i.to_string(), j.to_string(), f(cov), f(reference)]);
        }
    }
    let v = json!({
        "source": if plain_cosine { "quadrature" } else { "analytic" },
        "max_index": max_index,
        "max_offdiag_abs": max_off,
        "diagonal": diagonal,
        "max_diag_abs_dev": max_diag_dev,
        "max_reference_gap": max_ref_gap,
    });
    Ok((v, t))
}

/// Bracketing and mean-closeness measured directly from the index tables.
fn index_stats(index: &SubsequenceIndex) -> Value {
    let mut bracket_failures = 0u64;
    let mut max_gap = 0.0f64;
    for n in 1..=index.horizon as u64 {
        let (m, s) = (index.m_of(n), index.s_of(n));
        let (lo, hi) = (index.k_minus(m, s), index.k_plus(m, s));
        if !(lo <= n && n <= hi) {
            bracket_failures += 1;
        }
        let v = index.scaled_mean[n as usize - 1];
        for k in [lo, hi] {
            max_gap = max_gap.max((index.scaled_mean[k as usize - 1] - v).abs());
        }
    }
    let invariants = index.check_invariants();
    json!({
        "alpha": index.alpha,
        "epsilon": index.epsilon,
        "horizon": index.horizon,
        "a": index.a,
        "l": index.l,
        "max_level": index.max_level,
        "cells": index.cells.len(),
        "bracket_failures": bracket_failures,
        "max_mean_gap": max_gap,
        "mean_gap_within_epsilon": max_gap <= index.epsilon,
        "invariants_hold": invariants.is_ok(),
        "invariant_error": invariants.err(),
    })
}

fn slack_path(p: &SlackPath) -> Value {
    let mut grid = Vec::new();
    for m in 1..=p.m_max {
        let row: Vec<(f64, f64)> = (1..=p.k_max)
            .map(|k| outer_slacks(1.0 + 1.0 / m as f64, 1.0 / k as f64, p.a))
            .collect();
        grid.push(row);
    }
    let mut monotone = true;
    for m in 0..grid.len() {
        for k in 0..grid[m].len() {
            let here = grid[m][k];
            if m + 1 < grid.len() {
                let next = grid[m + 1][k];
                monotone &= next.0 < here.0 && next.1 < here.1;
            }
            if k + 1 < grid[m].len() {
                let next = grid[m][k + 1];
                monotone &= next.0 < here.0 && next.1 < here.1;
            }
        }
    }
    json!({ "m_max": p.m_max, "k_max": p.k_max, "a": p.a, "lower_upper": grid, "monotone": monotone })
}

fn proof(p: &ProofParams, fam: &SequenceFamily<f64>, normalizer: &NormalizerSpec<f64>, seed: u64) -> Out<TaskOutput> {
    match p {
        ProofParams::Index {
            alphas,
            epsilons,
            horizons,
        } => {
            let mut t = Table::new(&[
                "alpha",
                "epsilon",
                "horizon",
                "l",
                "cells",
                "max_mean_gap",
                "invariants_hold",
            ]);
            let mut cases = Vec::new();
            for &h in horizons {
                for &alpha in alphas {
                    for &eps in epsilons {
                        let index = build_index_for_family(fam, alpha, eps, h, normalizer)?;
                        let v = index_stats(&index);
                        t.push(vec![
                            f(alpha),
                            f(eps),
                            h.to_string(),
                            index.l.to_string(),
                            index.cells.len().to_string(),
                            f(v["max_mean_gap"].as_f64().unwrap_or(f64::NAN)),
                            v["invariants_hold"].to_string(),
                        ]);
                        cases.push(v);
                    }
                }
            }
            let all_hold = cases.iter().all(|c| {
                c["invariants_hold"] == json!(true)
                    && c["bracket_failures"] == json!(0)
                    && c["mean_gap_within_epsilon"] == json!(true)
            });
            Ok(TaskOutput {
                result: json!({ "cases": cases, "all_hold": all_hold }),
                tables: vec![("index".into(), t)],
            })
        }
        ProofParams::Kappa {
            alphas,
            epsilon,
            horizon,
            j_max,
        } => {
            let mut tables = Vec::new();
            let mut cases = Vec::new();
            for &alpha in alphas {
                let index = build_index_for_family(fam, alpha, *epsilon, *horizon, normalizer)?;
                let mut all = Table::new(&["band", "j", "kappa_j", "kappa_plus", "kappa_minus", "bound", "holds"]);
                let mut holds = true;
                let mut worst = 0.0f64;
                for s in 0..=index.l {
                    let recs = kappa_report(&index, s, *j_max)?;
                    let kt = kappa_table(&recs);
                    for row in kt.rows {
                        let mut r = vec![s.to_string()];
                        r.extend(row);
                        all.push(r);
                    }
                    for r in &recs {
                        holds &= r.holds;
                        worst = worst.max(r.kappa_j / r.bound);
                    }
                }
                cases.push(
                    json!({ "alpha": alpha, "bands": index.l + 1, "all_hold": holds, "max_ratio_to_bound": worst }),
                );
                tables.push((format!("kappa_alpha{}", fmt_num(alpha)), all));
            }
            let all_hold = cases.iter().all(|c| c["all_hold"] == json!(true));
            Ok(TaskOutput {
                result: json!({ "j_max": j_max, "epsilon": epsilon, "cases": cases, "all_hold": all_hold }),
                tables,
            })
        }
        ProofParams::Sandwich {
            alphas,
            epsilons,
            horizon,
            seed_count,
            slack_path: path,
        } => {
            let seeds: Vec<u64> = (0..*seed_count).map(|i| derive_seed(seed, i)).collect();
            let mut t = Table::new(&["alpha", "epsilon", "seed", "records", "violations", "max_residual"]);
            let mut cases = Vec::new();
            let mut total = 0usize;
            for &alpha in alphas {
                for &eps in epsilons {
                    let index = build_index_for_family(fam, alpha, eps, *horizon, normalizer)?;
                    let reports = sandwich_suite(fam, &index, &seeds)?;
                    let mut violations = 0usize;
                    let mut max_residual = f64::NEG_INFINITY;
                    for r in &reports {
                        violations += r.violations.len();
                        max_residual = max_residual.max(r.max_residual);
                        t.push(vec![
                            f(alpha),
                            f(eps),
                            r.seed.to_string(),
                            r.records.len().to_string(),
                            r.violations.len().to_string(),
                            f(r.max_residual),
                        ]);
                    }
                    total += violations;
                    cases.push(json!({
                        "alpha": alpha,
                        "epsilon": eps,
                        "a": index.a,
                        "seeds": seeds.len(),
                        "violations": violations,
                        "max_residual": max_residual,
                    }));
                }
            }
            let mut v = json!({ "horizon": horizon, "cases": cases, "violations": total });
            if let Some(sp) = path {
                v["slacks"] = slack_path(sp);
            }
            Ok(TaskOutput {
                result: v,
                tables: vec![("sandwich".into(), t)],
            })
        }
        ProofParams::Chebyshev {
            alphas,
            epsilons,
            horizon,
            deltas,
            replications,
            direct,
        } => {
            let mut t = Table::new(&[
                "alpha",
                "epsilon",
                "band",
                "delta",
                "level",
                "sign",
                "k",
                "p_hat",
                "stderr",
                "bound",
                "holds_within_noise",
            ]);
            let mut levels = 0usize;
            let mut failures = 0usize;
            let mut run = 0u64;
            for &alpha in alphas {
                for &eps in epsilons {
                    let index = build_index_for_family(fam, alpha, eps, *horizon, normalizer)?;
                    let bands: std::collections::BTreeSet<u64> = index.cells.keys().map(|&(_, b)| b).collect();
                    for &s in &bands {
                        for &delta in deltas {
                            let r = chebyshev_report(fam, &index, s, delta, *replications, derive_seed(seed, run))?;
                            run += 1;
                            for l in &r.levels {
                                levels += 1;
                                failures += !l.holds_within_noise as usize;
                                t.push(vec![
                                    f(alpha),
                                    f(eps),
                                    s.to_string(),
                                    f(delta),
                                    l.level.to_string(),
                                    format!("{:?}", l.sign).to_lowercase(),
                                    l.k.to_string(),
                                    f(l.p_hat),
                                    f(l.stderr),
                                    f(l.bound),
                                    l.holds_within_noise.to_string(),
                                ]);
                            }
                        }
                    }
                }
            }
            let mut v = json!({ "levels_checked": levels, "failures": failures });
            let mut tables = vec![("chebyshev_levels".into(), t)];
            let mut all_hold = failures == 0;
            if let Some(d) = direct {
                let (dv, dt) = chebyshev_grid(fam, d, derive_seed(seed, u64::MAX))?;
                all_hold &= dv["all_hold"] == json!(true);
                v["direct"] = dv;
                tables.push(("chebyshev_direct".into(), dt));
            }
            v["all_hold"] = json!(all_hold);
            Ok(TaskOutput { result: v, tables })
        }
    }
}

fn integrate(p: &IntegrateParams, seed: u64) -> Out<TaskOutput> {
    match p {
        IntegrateParams::Pospart {
            monte_carlo_pairs,
            nested,
        } => {
            let q = gaussian_pospart_moments::<f64>()?;
            let mut t = Table::new(&["quantity", "value"]);
            for (name, v) in [
                ("mean_pos", q.mean_pos),
                ("triple_integral", q.triple_integral),
                ("product_pos", q.product_pos),
                ("cov_pos", q.cov_pos),
                ("second_moment_pos", q.second_moment_pos),
                ("var_pos", q.var_pos),
            ] {
                t.push(vec![name.into(), f(v)]);
            }
            let mut v = to_value(&q);
            let mut tables = vec![("pospart".into(), t)];
            if let Some(pairs) = monte_carlo_pairs {
                let (cv, ct) = pospart_cross_check(*pairs, seed)?;
                v["cross_check"] = cv;
                tables.push(("pospart_mc".into(), ct));
            }
            if *nested {
                let n = triple_integral_nested::<f64>(1e-7)?;
                v["nested_triple_integral"] = to_value(&n);
            }
            Ok(TaskOutput { result: v, tables })
        }
        IntegrateParams::Cosine { max_index } => {
            let mut t = Table::new(&["i", "j", "quadrature", "abs_error_estimate", "analytic"]);
            let (mut max_off, mut max_gap) = (0.0f64, 0.0f64);
            let mut diagonal = Vec::new();
            for i in 0..=*max_index {
                for j in i..=*max_index {
                    let c = cosine_moment::<f64>(i, j)?;
                    let q = c.quadrature.value;
                    max_gap = max_gap.max((q - c.analytic).abs());
                    if i == j {
                        if i >= 1 {
                            diagonal.push(q);
                        }
                    } else if i >= 1 {
                        max_off = max_off.max(q.abs());
                    }
                    t.push(vec![
                        i.to_string(),
                        j.to_string(),
                        f(q),
                        f(c.quadrature.abs_error_estimate),
                        f(c.analytic),
                    ]);
                }
            }
            let zero = cosine_moment::<f64>(0, 0)?.quadrature.value;
            Ok(TaskOutput {
                result: json!({
                    "max_index": max_index,
                    "max_offdiag_abs": max_off,
                    "diagonal": diagonal,
                    "zero_zero": zero,
                    "max_analytic_gap": max_gap,
                }),
                tables: vec![("cosine_moments".into(), t)],
            })
        }
        IntegrateParams::Builtin { function, tolerance } => {
            let r = match function {
                BuiltinFunction::ExpDecay => integrate_1d(|t: f64| (-t).exp(), 0.0, f64::INFINITY, *tolerance)?,
                BuiltinFunction::NormalDensity => {
                    integrate_1d(|x: f64| normal_pdf(x), f64::NEG_INFINITY, f64::INFINITY, *tolerance)?
                }
                BuiltinFunction::Zero => integrate_1d(|_: f64| 0.0, 0.0, 1.0, *tolerance)?,
            };
            let mut t = Table::new(&["value", "abs_error_estimate", "evaluations"]);
            t.push(vec![f(r.value), f(r.abs_error_estimate), r.evaluations.to_string()]);
            Ok(TaskOutput {
                result: to_value(&r),
                tables: vec![("integral".into(), t)],
            })
        }
    }
}

fn oracle(p: &OracleParams, seed: u64) -> Out<TaskOutput> {
    let ns: Vec<u64> = match (p.n, p.n_range) {
        (Some(n), None) => vec![n],
        (None, Some([lo, hi])) => (lo..=hi).collect(),
        (Some(n), Some([lo, hi])) => {
            let mut v: Vec<u64> = (lo..=hi).collect();
            if !v.contains(&n) {
                v.push(n);
                v.sort_unstable();
            }
            v
        }
        (None, None) => return Err(CliError::Config("oracle needs `n` or `n_range`".into())),
    };
    let mut t = Table::new(&["n", "numerator", "denominator", "probability"]);
    let mut values = Vec::new();
    let mut min_p = f64::INFINITY;
    let mut single = None;
    for &n in &ns {
        let r = exact_step_deviation(n)?;
        let prob = *r.numer() as f64 / *r.denom() as f64;
        min_p = min_p.min(prob);
        if Some(n) == p.n {
            single = Some(prob);
        }
        t.push(vec![
            n.to_string(),
            r.numer().to_string(),
            r.denom().to_string(),
            f(prob),
        ]);
        values.push(json!({ "n": n, "numerator": r.numer().to_string(), "denominator": r.denom().to_string(), "probability": prob }));
    }
    let mut v = json!({ "values": values, "min_probability": min_p });
    if let Some(prob) = single {
        v["n"] = json!(p.n);
        v["probability"] = json!(prob);
    }
    let mut tables = vec![("exact".into(), t)];
    if let Some(mc) = &p.monte_carlo {
        let fam = make_family::<f64>(&FamilyDescriptor::step())?;
        let est = estimate_event_probability(
            &fam,
            &EventSpec::CenteredSumGeq { multiple: 0.5 },
            mc.n,
            mc.samples,
            seed,
        )?;
        let r = exact_step_deviation(mc.n)?;
        let exact = *r.numer() as f64 / *r.denom() as f64;
        let z = if est.stderr > 0.0 {
            (est.p_hat - exact) / est.stderr
        } else {
            0.0
        };
        let mut mt = Table::new(&["n", "samples", "p_hat", "stderr", "exact", "z"]);
        mt.push(vec![
            mc.n.to_string(),
            mc.samples.to_string(),
            f(est.p_hat),
            f(est.stderr),
            f(exact),
            f(z),
        ]);
        v["monte_carlo"] = json!({
            "n": mc.n,
            "samples": mc.samples,
            "p_hat": est.p_hat,
            "stderr": est.stderr,
            "ci95": to_value(&est.ci95),
            "exact": exact,
            "z": z,
        });
        tables.push(("monte_carlo".into(), mt));
    }
    Ok(TaskOutput { result: v, tables })
}
