use super::*;
use crate::rng::derive_seed;
use proptest::prelude::*;
use std::f64::consts::PI;

fn fam(d: FamilyDescriptor) -> SequenceFamily<f64> {
    make_family(&d).unwrap()
}

#[test]
fn step_variance_is_quarter_n_squared() {
    let f = fam(FamilyDescriptor::step());
    let m = f.moments().unwrap();
    for n in [1u64, 2, 7, 100] {
        assert_eq!(m.var(n), (n * n) as f64 / 4.0);
    }
    let at4 = f.analytic_moment(4).unwrap();
    assert_eq!(at4.mean, 2.0);
    assert_eq!(at4.var, 4.0);
    assert_eq!(at4.mean_sum, 5.0);
    assert_eq!(at4.essinf, 0.0);
}

#[test]
fn cosine_pairwise_uncorrelated_and_half_variance() {
    let f = fam(FamilyDescriptor::cosine());
    let m = f.moments().unwrap();
    for i in 1..10 {
        for j in 1..10 {
            let c = m.pair_cov(i, j).unwrap();
            if i == j {
                assert_eq!(c, 0.5);
            } else {
                assert_eq!(c, 0.0);
            }
        }
    }
    assert_eq!(m.essinf(3), -1.0);
}

#[test]
fn gated_gaussian_variance_half_and_essinf_unbounded() {
    let f = fam(FamilyDescriptor::gated_gaussian());
    let at = f.analytic_moment(9).unwrap();
    assert_eq!(at.var, 0.5);
    assert_eq!(at.mean, 0.0);
    assert_eq!(at.essinf, f64::NEG_INFINITY);
}

#[test]
fn gated_gaussian_variance_monte_carlo() {
    // V(W·Z) = E(W²)E(Z²) = 1/2, checked on 10⁶ draws (10⁴ paths × 100 indices).
    let f = fam(FamilyDescriptor::gated_gaussian());
    let mut buf = Vec::new();
    let mut sum_sq = 0.0;
    let mut count = 0.0;
    for r in 0..10_000u64 {
        f.fill_values(derive_seed(11, r), 100, None, &mut buf);
        for &x in &buf {
            sum_sq += x * x;
            count += 1.0;
        }
    }
    let var = sum_sq / count;
    // Draws are not independent across one path (shared gate); paths are.
    // Per-path mean of x² has sd <= ~0.5, so the estimate's sd is <= 0.005.
    assert!((var - 0.5).abs() < 0.02, "{var}");
}

#[test]
fn shifted_cosine_mean_is_one() {
    let f = fam(FamilyDescriptor::shifted_cosine());
    for n in [1u64, 2, 50] {
        let at = f.analytic_moment(n).unwrap();
        assert_eq!(at.mean, 1.0);
        assert_eq!(at.mean_sum, n as f64);
        assert_eq!(at.essinf, 0.0);
    }
    assert!(f.moments().unwrap().is_nonnegative());
}

#[test]
fn moments_unavailable_after_opaque_transform() {
    let f = fam(FamilyDescriptor::gated_gaussian().with(Transform::Truncate));
    assert!(f.moments().is_none());
    assert!(matches!(f.analytic_moment(1), Err(Error::MomentsUnavailable(_))));
    assert!(matches!(
        f.transform(Transform::Center),
        Err(Error::MomentsUnavailable(_))
    ));
}

#[test]
fn essinf_shift_needs_finite_infimum() {
    let g = fam(FamilyDescriptor::gated_gaussian());
    assert!(matches!(
        g.transform(Transform::EssinfShift),
        Err(Error::MomentsUnavailable(_))
    ));
    let c = fam(FamilyDescriptor::cosine())
        .transform(Transform::EssinfShift)
        .unwrap();
    let at = c.analytic_moment(3).unwrap();
    assert_eq!(at.mean, 1.0);
    assert_eq!(at.essinf, 0.0);
    assert_eq!(at.mean_sum, 3.0);
}

#[test]
fn center_zeroes_the_mean() {
    let f = fam(FamilyDescriptor::step().with(Transform::Center));
    let at = f.analytic_moment(6).unwrap();
    assert_eq!(at.mean, 0.0);
    assert_eq!(at.var, 9.0);
    assert_eq!(at.mean_sum, 0.0);
    assert_eq!(at.essinf, -3.0);
    let t = f.sample_trajectory(10, 3).unwrap();
    for (k, &x) in t.values.iter().enumerate() {
        let n = (k + 1) as f64;
        assert!(x == n / 2.0 || x == -n / 2.0);
    }
}

#[test]
fn truncate_of_step_is_identity() {
    let base = fam(FamilyDescriptor::step());
    let trunc = base.transform(Transform::Truncate).unwrap();
    let a = base.sample_trajectory(200, 5).unwrap();
    let b = trunc.sample_trajectory(200, 5).unwrap();
    assert_eq!(a.values, b.values);
    let (ma, mb) = (base.moments().unwrap(), trunc.moments().unwrap());
    for n in 1..50 {
        assert_eq!(ma.mean(n), mb.mean(n));
        assert_eq!(ma.var(n), mb.var(n));
    }
}

#[test]
fn truncated_exponential_closed_form() {
    let f = fam(FamilyDescriptor::exponential(1.0).with(Transform::Truncate));
    let m = f.moments().unwrap();
    for n in [1u64, 2, 5, 30] {
        let nf = n as f64;
        // E X - E Y = (n+1)e^{-n}.
        assert!((1.0 - m.mean(n) - (nf + 1.0) * (-nf).exp()).abs() < 1e-14);
        assert!(m.var(n) >= 0.0 && m.var(n) <= 1.0);
    }
}

#[test]
fn positive_part_of_gated_gaussian() {
    let f = fam(FamilyDescriptor::gated_gaussian().with(Transform::PositivePart));
    let m = f.moments().unwrap();
    let expected = 1.0 / (2.0 * (2.0 * PI).sqrt());
    assert!((m.mean(17) - expected).abs() < 1e-15);
    assert!((m.mean(1) - 0.1995).abs() < 1e-4);
    assert!((m.var(1) - (0.25 - 1.0 / (8.0 * PI))).abs() < 1e-15);
    assert!((m.pair_cov(1, 2).unwrap() - 1.0 / (8.0 * PI)).abs() < 1e-15);
    let ratio = m.sum_variance(100).unwrap() / m.variance_sum(100);
    assert!((ratio - 19.738_695_359_684_6).abs() < 1e-9, "{ratio}");
}

#[test]
fn affine_shift_of_cosine_stays_in_zero_two() {
    let f = fam(FamilyDescriptor::cosine().with(Transform::Affine { a: 1.0, b: 1.0 }));
    for seed in 0..20 {
        let t = f.sample_trajectory(500, seed).unwrap();
        assert!(t.values.iter().all(|&x| (0.0..=2.0).contains(&x)));
    }
}

#[test]
fn forced_latents() {
    let c = fam(FamilyDescriptor::cosine());
    let t = c
        .sample_with_latents(
            64,
            9,
            Some(&Latents {
                uniform_x: Some(0.0),
                gate_w: None,
            }),
        )
        .unwrap();
    assert!(t.values.iter().all(|&x| x == 1.0));
    let g = fam(FamilyDescriptor::gated_gaussian());
    let t = g
        .sample_with_latents(
            64,
            9,
            Some(&Latents {
                uniform_x: None,
                gate_w: Some(0.0),
            }),
        )
        .unwrap();
    assert!(t.values.iter().all(|&x| x == 0.0));
    assert_eq!(t.s(64), 0.0);
}

#[test]
fn latent_sharing_cosine() {
    let c = fam(FamilyDescriptor::cosine());
    for seed in 0..10 {
        let t = c.sample_trajectory(300, seed).unwrap();
        let x = t.latents.unwrap().uniform_x.unwrap();
        assert!((-1.0..=1.0).contains(&x));
        for (k, &v) in t.values.iter().enumerate() {
            let n = (k + 1) as f64;
            assert_eq!(v, (2.0 * PI * n * x).cos());
        }
    }
}

#[test]
fn latent_sharing_gated_gaussian() {
    let g = fam(FamilyDescriptor::gated_gaussian());
    let mut zeros = 0;
    for seed in 0..200 {
        let t = g.sample_trajectory(50, seed).unwrap();
        if t.latents.unwrap().gate_w == Some(0.0) {
            zeros += 1;
            assert!(t.values.iter().all(|&x| x == 0.0));
        }
    }
    assert!(zeros > 60 && zeros < 140, "{zeros}");
}

#[test]
fn horizon_errors() {
    let f = fam(FamilyDescriptor::step()).with_max_horizon(1000);
    assert!(matches!(
        f.sample_trajectory(1001, 0),
        Err(Error::HorizonOverflow {
            requested: 1001,
            max: 1000
        })
    ));
    assert!(f.sample_trajectory(0, 0).is_err());
    assert_eq!(fam(FamilyDescriptor::step()).max_horizon(), DEFAULT_MAX_HORIZON);
}

#[test]
fn invalid_descriptor_rejected_by_make_family() {
    let d = FamilyDescriptor::exponential(-1.0);
    assert!(matches!(make_family::<f64>(&d), Err(Error::InvalidParams(_))));
}

#[test]
fn f32_family_samples() {
    let f: SequenceFamily<f32> = make_family(&FamilyDescriptor::shifted_cosine()).unwrap();
    let t = f.sample_trajectory(100, 1).unwrap();
    assert!(t.values.iter().all(|&x| (0.0..=2.0).contains(&x)));
    assert_eq!(f.analytic_moment(10).unwrap().mean_sum, 10.0f32);
}

/// Sample mean and variance of X_n across replications, with standard errors.
fn mc_moments(f: &SequenceFamily<f64>, n: usize, reps: u64, seed: u64) -> (f64, f64, f64, f64) {
    let mut buf = Vec::new();
    let xs: Vec<f64> = (0..reps)
        .map(|r| {
            f.fill_values(derive_seed(seed, r), n, None, &mut buf);
            buf[n - 1]
        })
        .collect();
    let r = reps as f64;
    let mean = xs.iter().sum::<f64>() / r;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / r;
    let var = m2 * r / (r - 1.0);
    (mean, (m2 / r).sqrt(), var, ((m4 - m2 * m2).max(0.0) / r).sqrt())
}

#[test]
fn monte_carlo_moments_match_profiles() {
    let families = [
        FamilyDescriptor::cosine(),
        FamilyDescriptor::gated_gaussian(),
        FamilyDescriptor::step(),
        FamilyDescriptor::exponential(1.0),
        FamilyDescriptor::iid(IidBase::Uniform { a: -1.0, b: 3.0 }),
        FamilyDescriptor::iid(IidBase::BernoulliScaled { p: 0.3, scale: 2.0 }),
        FamilyDescriptor::constant(1.5),
        FamilyDescriptor::shifted_cosine(),
        FamilyDescriptor::gated_gaussian().with(Transform::PositivePart),
        FamilyDescriptor::gated_gaussian().with(Transform::NegativePart),
        FamilyDescriptor::cosine().with(Transform::PositivePart),
        FamilyDescriptor::exponential(1.0).with(Transform::Truncate),
        FamilyDescriptor::step().with(Transform::Center),
    ];
    for (k, d) in families.iter().enumerate() {
        let f = fam(d.clone());
        let m = f.moments().unwrap().clone();
        for n in [1usize, 5, 20] {
            let (mean, se_mean, var, se_var) = mc_moments(&f, n, 100_000, 1000 + k as u64);
            let label = d.display_label();
            assert!(
                (mean - m.mean(n as u64)).abs() <= 4.0 * se_mean,
                "{label} n={n}: mean {mean} vs {} (se {se_mean})",
                m.mean(n as u64)
            );
            assert!(
                // Two-point laws have m4 = m2², so allow for the O(1/R) bias term.
                (var - m.var(n as u64)).abs() <= 4.0 * se_var + 4.0 * var / 100_000.0 + 1e-12,
                "{label} n={n}: var {var} vs {} (se {se_var})",
                m.var(n as u64)
            );
        }
    }
}

#[test]
fn tail_functions_are_monotone_probabilities() {
    let families = [
        FamilyDescriptor::cosine(),
        FamilyDescriptor::gated_gaussian(),
        FamilyDescriptor::step(),
        FamilyDescriptor::exponential(2.0),
        FamilyDescriptor::iid(IidBase::Uniform { a: 0.0, b: 2.0 }),
        FamilyDescriptor::iid(IidBase::BernoulliScaled { p: 0.3, scale: -2.0 }),
        FamilyDescriptor::gated_gaussian().with(Transform::PositivePart),
        FamilyDescriptor::exponential(1.0).with(Transform::Truncate),
        FamilyDescriptor::step().with(Transform::Affine { a: 1.0, b: 0.5 }),
    ];
    for d in families {
        let f = fam(d);
        let m = f.moments().unwrap();
        for n in [1u64, 3, 10] {
            let mut prev = 1.0;
            for i in -400..=400 {
                let t = i as f64 / 20.0;
                let p = m.tail(n, t).unwrap();
                assert!((0.0..=1.0).contains(&p));
                assert!(p <= prev + 1e-15, "{} n={n} t={t}", f.descriptor().display_label());
                prev = p;
            }
        }
    }
}

#[test]
fn mean_sum_identity_for_closed_forms() {
    for d in [
        FamilyDescriptor::step(),
        FamilyDescriptor::shifted_cosine(),
        FamilyDescriptor::exponential(4.0),
        FamilyDescriptor::constant(0.25),
        FamilyDescriptor::step().with(Transform::Affine { a: 0.5, b: 2.0 }),
    ] {
        let f = fam(d);
        let m = f.moments().unwrap();
        assert!(m.has_closed_mean_sum());
        let mut acc = 0.0;
        for n in 1..=200u64 {
            acc += m.mean(n);
            assert_eq!(m.mean_sum(n), acc, "{} n={n}", f.descriptor().display_label());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn determinism_and_prefix_identity(seed in any::<u64>(), horizon in 1usize..400, which in 0usize..5) {
        let d = [
            FamilyDescriptor::cosine(),
            FamilyDescriptor::gated_gaussian(),
            FamilyDescriptor::step(),
            FamilyDescriptor::exponential(1.0).with(Transform::Truncate),
            FamilyDescriptor::shifted_cosine(),
        ][which].clone();
        let f = fam(d);
        let a = f.sample_trajectory(horizon, seed).unwrap();
        let b = f.sample_trajectory(horizon, seed).unwrap();
        prop_assert_eq!(&a.values, &b.values);
        prop_assert_eq!(a.values.len(), horizon);
        prop_assert_eq!(a.prefix_sums.len(), horizon);
        let mut s = 0.0;
        for k in 0..horizon {
            s += a.values[k];
            prop_assert_eq!(a.prefix_sums[k], s);
        }
        // Shared prefixes across horizons.
        let longer = f.sample_trajectory(horizon + 37, seed).unwrap();
        prop_assert_eq!(&longer.values[..horizon], &a.values[..]);
    }

    #[test]
    fn positive_minus_negative_part_recovers_path(seed in any::<u64>(), which in 0usize..4) {
        let d = [
            FamilyDescriptor::cosine(),
            FamilyDescriptor::gated_gaussian(),
            FamilyDescriptor::step().with(Transform::Center),
            FamilyDescriptor::iid(IidBase::Uniform { a: -2.0, b: 1.0 }),
        ][which].clone();
        let f = fam(d);
        let pos = f.transform(Transform::PositivePart).unwrap();
        let neg = f.transform(Transform::NegativePart).unwrap();
        let x = f.sample_trajectory(128, seed).unwrap();
        let p = pos.sample_trajectory(128, seed).unwrap();
        let q = neg.sample_trajectory(128, seed).unwrap();
        for k in 0..128 {
            prop_assert_eq!(p.values[k] - q.values[k], x.values[k]);
        }
    }
}
