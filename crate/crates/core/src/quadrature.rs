//! Adaptive Gauss–Kronrod quadrature and the moment integrals of the
//! cosine and gated-Gaussian families.
//!
//! Infinite endpoints are mapped onto `[0, 1)` with `x = a + u/(1-u)`,
//! `dx = du/(1-u)^2` (and its mirror for `-inf`). Kronrod nodes never touch
//! the endpoint, but after deep bisection near `u = 1` the mapped abscissa
//! can overflow to `inf`. At such points the integrand is taken to be zero
//! when `f(x)` itself evaluates to zero there; otherwise the evaluation is
//! reported as non-finite. For the decaying integrands used here (normal
//! densities and tails, exponentials) `f` underflows long before `1-u`
//! reaches the `f64` resolution, so the cutoff is never the binding error.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{normal_pdf, normal_sf, Scalar};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for nodes `XGK[1], XGK[3], XGK[5]` and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult<T> {
    pub value: T,
    pub abs_error_estimate: T,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    /// Upper bound on the number of live subintervals.
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { max_intervals: 4000 }
    }
}

struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Scalar> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Segment<T> {}

impl<T: Scalar> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.as_f64().total_cmp(&other.error.as_f64())
    }
}

fn kronrod15<T: Scalar, F: Fn(T) -> Result<T>>(f: &F, a: T, b: T) -> Result<Segment<T>> {
    let two = T::lit(2.0);
    let centre = (a + b) / two;
    let half = (b - a) / two;
    let fc = f(centre)?;
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    let mut absolute = kronrod.abs();
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * T::lit(x);
        let f1 = f(centre - dx)?;
        let f2 = f(centre + dx)?;
        kronrod += T::lit(w) * (f1 + f2);
        absolute += T::lit(w) * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += T::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let round_off = T::lit(50.0) * T::epsilon() * absolute * half.abs();
    let error = ((kronrod - gauss) * half).abs() + round_off;
    Ok(Segment { a, b, value, error })
}

/// Adaptive integration of `f` over `[a, b]` to absolute tolerance `tolerance`.
///
/// Either endpoint may be infinite; finite endpoints require `a < b`.
pub fn integrate_1d<T, F>(f: F, a: T, b: T, tolerance: T) -> Result<QuadratureResult<T>>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    integrate_with(f, a, b, tolerance, QuadratureOptions::default())
}

pub fn integrate_with<T, F>(f: F, a: T, b: T, tolerance: T, options: QuadratureOptions) -> Result<QuadratureResult<T>>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    integrate_dyn(&f, a, b, tolerance, options)
}

fn integrate_dyn<T: Scalar>(
    f: &dyn Fn(T) -> T,
    a: T,
    b: T,
    tolerance: T,
    options: QuadratureOptions,
) -> Result<QuadratureResult<T>> {
    if a.is_nan() || b.is_nan() || !(a < b) {
        return Err(Error::InvalidArgument(format!(
            "integration bounds must satisfy a < b, got [{a}, {b}]"
        )));
    }
    if !(tolerance > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let one = T::one();
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive(|x| finite_eval(f, x), a, b, tolerance, options),
        (true, false) => adaptive(
            |u| mapped_eval(f, a + u / (one - u), one - u),
            T::zero(),
            one,
            tolerance,
            options,
        ),
        (false, true) => adaptive(
            |u| mapped_eval(f, b - u / (one - u), one - u),
            T::zero(),
            one,
            tolerance,
            options,
        ),
        (false, false) => {
            let half_tol = tolerance / T::lit(2.0);
            let left = integrate_dyn(f, T::neg_infinity(), T::zero(), half_tol, options)?;
            let right = integrate_dyn(f, T::zero(), T::infinity(), half_tol, options)?;
            Ok(QuadratureResult {
                value: left.value + right.value,
                abs_error_estimate: left.abs_error_estimate + right.abs_error_estimate,
                evaluations: left.evaluations + right.evaluations,
            })
        }
    }
}

fn finite_eval<T: Scalar>(f: &dyn Fn(T) -> T, x: T) -> Result<T> {
    let y = f(x);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::NonFiniteIntegrand(x.as_f64()))
    }
}

fn mapped_eval<T: Scalar>(f: &dyn Fn(T) -> T, x: T, one_minus_u: T) -> Result<T> {
    let y = f(x);
    if y == T::zero() {
        return Ok(y);
    }
    let v = y / (one_minus_u * one_minus_u);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteIntegrand(x.as_f64()))
    }
}

fn adaptive<T, F>(f: F, a: T, b: T, tolerance: T, options: QuadratureOptions) -> Result<QuadratureResult<T>>
where
    T: Scalar,
    F: Fn(T) -> Result<T>,
{
    let first = kronrod15(&f, a, b)?;
    let mut evaluations = 15;
    let mut total_error = first.error;
    let mut heap = BinaryHeap::new();
    // Segments too narrow to bisect stay in the total but leave the queue.
    let mut frozen_error = T::zero();
    heap.push(first);

    while total_error > tolerance {
        let Some(worst) = heap.pop() else { break };
        if heap.len() + 2 > options.max_intervals {
            heap.push(worst);
            break;
        }
        let mid = (worst.a + worst.b) / T::lit(2.0);
        if !(worst.a < mid && mid < worst.b) {
            frozen_error += worst.error;
            continue;
        }
        let left = kronrod15(&f, worst.a, mid)?;
        let right = kronrod15(&f, mid, worst.b)?;
        evaluations += 30;
        total_error = total_error - worst.error + left.error + right.error;
        heap.push(left);
        heap.push(right);
    }

    // Re-add from scratch to shed drift accumulated by the running updates.
    let mut value = T::zero();
    let mut error = frozen_error;
    for s in heap.iter() {
        value += s.value;
        error += s.error;
    }
    if error > tolerance {
        return Err(Error::ToleranceNotMet {
            tolerance: tolerance.as_f64(),
            estimate: error.as_f64(),
            evaluations,
        });
    }
    Ok(QuadratureResult {
        value,
        abs_error_estimate: error,
        evaluations,
    })
}

/// `E[cos(2πiX) cos(2πjX)]` for `X` uniform on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineMoment<T> {
    pub i: u64,
    pub j: u64,
    pub quadrature: QuadratureResult<T>,
    /// Product-to-sum value: `(δ_{i,j} + δ_{i+j,0}) / 2`.
    pub analytic: T,
}

pub fn cosine_moment<T: Scalar>(i: u64, j: u64) -> Result<CosineMoment<T>> {
    let two_pi = T::lit(2.0) * T::PI();
    let fi = T::from_count(i);
    let fj = T::from_count(j);
    let half = T::lit(0.5);
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
    let quadrature = integrate_1d(
        |x: T| (two_pi * fi * x).cos() * (two_pi * fj * x).cos() * half,
        -T::one(),
        T::one(),
        tol,
    )?;
    let mut analytic = T::zero();
    if i == j {
        analytic += half;
    }
    if i + j == 0 {
        analytic += half;
    }
    Ok(CosineMoment {
        i,
        j,
        quadrature,
        analytic,
    })
}

/// Moments of `X⁺ = (W·Z)⁺` with `W ~ Bernoulli(1/2)` independent of `Z ~ N(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosPartMoments<T> {
    /// `E X⁺ = ½ ∫₀^∞ P(Z > t) dt`.
    pub mean_pos: T,
    /// `∫₀^∞∫₀^∞∫_{t/x}^∞ φ(x)φ(y) dy dx dt`, evaluated without the gate factor.
    pub triple_integral: T,
    /// `E(X₁⁺X₂⁺) = ½ · triple_integral` (both factors share the gate).
    pub product_pos: T,
    pub cov_pos: T,
    /// `E((X⁺)²) = ½ E((Z⁺)²) = ¼`.
    pub second_moment_pos: T,
    pub var_pos: T,
    pub mean_quadrature: QuadratureResult<T>,
    /// Quadrature for `E Z⁺`, whose square is the triple integral.
    pub zplus_quadrature: QuadratureResult<T>,
}

pub fn gaussian_pospart_moments<T: Scalar>() -> Result<GaussianPosPartMoments<T>> {
    let half = T::lit(0.5);
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
    let tail = integrate_1d(|t: T| normal_sf(t), T::zero(), T::infinity(), tol)?;
    let mean_pos = half * tail.value;
    let mean_quadrature = QuadratureResult {
        value: mean_pos,
        abs_error_estimate: half * tail.abs_error_estimate,
        evaluations: tail.evaluations,
    };
    // Moving the t-integral innermost turns ∫∫ P(xy > t) φφ into ∫∫ x y φ(x)φ(y)
    // over the positive quadrant, i.e. (E Z⁺)².
    let zplus_quadrature = integrate_1d(|x: T| x * normal_pdf(x), T::zero(), T::infinity(), tol)?;
    let triple_integral = zplus_quadrature.value * zplus_quadrature.value;
    let product_pos = half * triple_integral;
    let second_moment_pos = T::lit(0.25);
    Ok(GaussianPosPartMoments {
        mean_pos,
        triple_integral,
        product_pos,
        cov_pos: product_pos - mean_pos * mean_pos,
        second_moment_pos,
        var_pos: second_moment_pos - mean_pos * mean_pos,
        mean_quadrature,
        zplus_quadrature,
    })
}

/// Direct three-level nested evaluation of the displayed triple integral.
/// Slow; used only to cross-check the reduced form.
pub fn triple_integral_nested<T: Scalar>(tolerance: T) -> Result<QuadratureResult<T>> {
    let inner_tol = tolerance * T::lit(1e-3);
    let middle_tol = tolerance * T::lit(1e-2);
    let evaluations = std::cell::Cell::new(0usize);
    let failure = std::cell::RefCell::new(None::<Error>);

    let inner = |t: T, x: T| -> T {
        let lower = if t == T::zero() { T::zero() } else { t / x };
        if !lower.is_finite() {
            return T::zero();
        }
        match integrate_1d(|y: T| normal_pdf(y), lower, T::infinity(), inner_tol) {
            Ok(r) => {
                evaluations.set(evaluations.get() + r.evaluations);
                r.value * normal_pdf(x)
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                T::zero()
            }
        }
    };
    let middle = |t: T| -> T {
        match integrate_1d(|x: T| inner(t, x), T::zero(), T::infinity(), middle_tol) {
            Ok(r) => r.value,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                T::zero()
            }
        }
    };
    let outer = integrate_1d(middle, T::zero(), T::infinity(), tolerance)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(QuadratureResult {
        value: outer.value,
        abs_error_estimate: outer.abs_error_estimate,
        evaluations: outer.evaluations + evaluations.get(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_integrand() {
        let r = integrate_1d(|_x: f64| 0.0, 0.0, 1.0, 1e-10).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.evaluations > 0);
    }

    #[test]
    fn exponential_on_half_line() {
        let r = integrate_1d(|t: f64| (-t).exp(), 0.0, f64::INFINITY, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn normal_density_on_real_line() {
        let r = integrate_1d(normal_pdf::<f64>, f64::NEG_INFINITY, f64::INFINITY, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn negative_half_line() {
        let r = integrate_1d(|t: f64| t.exp(), f64::NEG_INFINITY, 0.0, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8);
    }

    type Case = (Box<dyn Fn(f64) -> f64>, f64, f64, f64);

    #[test]
    fn error_estimate_is_conservative_on_closed_forms() {
        let suite: Vec<Case> = vec![
            (Box::new(|t: f64| (-t).exp()), 0.0, f64::INFINITY, 1.0),
            (Box::new(normal_pdf::<f64>), f64::NEG_INFINITY, f64::INFINITY, 1.0),
            (Box::new(|x: f64| x.sin()), 0.0, PI, 2.0),
            (Box::new(|x: f64| x * x), 0.0, 3.0, 9.0),
            (
                Box::new(|x: f64| 1.0 / (1.0 + x * x)),
                f64::NEG_INFINITY,
                f64::INFINITY,
                PI,
            ),
            (Box::new(|x: f64| x.sqrt()), 0.0, 1.0, 2.0 / 3.0),
            (Box::new(|x: f64| (2.0 * PI * 7.0 * x).cos().powi(2)), -1.0, 1.0, 1.0),
        ];
        for (k, (f, a, b, exact)) in suite.into_iter().enumerate() {
            let r = integrate_1d(f, a, b, 1e-10).unwrap();
            let err = (r.value - exact).abs();
            assert!(
                err <= r.abs_error_estimate,
                "case {k}: err {err} > est {}",
                r.abs_error_estimate
            );
            assert!(r.abs_error_estimate <= 1e-10);
        }
    }

    #[test]
    fn rejects_bad_bounds_and_tolerance() {
        assert!(matches!(
            integrate_1d(|x: f64| x, 1.0, 0.0, 1e-6),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            integrate_1d(|x: f64| x, 0.0, 1.0, 0.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let r = integrate_1d(|x: f64| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, 1e-8);
        assert!(matches!(r, Err(Error::NonFiniteIntegrand(_))));
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let r = integrate_with(
            |x: f64| (1.0 / x).sin(),
            1e-6,
            1.0,
            1e-14,
            QuadratureOptions { max_intervals: 8 },
        );
        assert!(matches!(r, Err(Error::ToleranceNotMet { .. })));
    }

    #[test]
    fn cosine_moment_examples() {
        let m = cosine_moment::<f64>(1, 2).unwrap();
        assert!(m.quadrature.value.abs() < 1e-10);
        assert_eq!(m.analytic, 0.0);
        let m = cosine_moment::<f64>(3, 3).unwrap();
        assert!((m.quadrature.value - 0.5).abs() < 1e-10);
        assert_eq!(m.analytic, 0.5);
        let m = cosine_moment::<f64>(0, 0).unwrap();
        assert!((m.quadrature.value - 1.0).abs() < 1e-12);
        assert_eq!(m.analytic, 1.0);
    }

    #[test]
    fn cosine_moment_grid_matches_product_to_sum() {
        for i in 0..=20 {
            for j in 0..=20 {
                let m = cosine_moment::<f64>(i, j).unwrap();
                assert!((m.quadrature.value - m.analytic).abs() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn pospart_moments() {
        let m = gaussian_pospart_moments::<f64>().unwrap();
        let exact_mean = 1.0 / (2.0 * (2.0 * PI).sqrt());
        assert!((m.mean_pos - exact_mean).abs() < 1e-10);
        assert!((m.mean_pos - 0.199471).abs() < 1e-4);
        assert!((m.triple_integral - 1.0 / (2.0 * PI)).abs() < 1e-10);
        assert_eq!(m.product_pos, 0.5 * m.triple_integral);
        assert!((m.cov_pos - 1.0 / (8.0 * PI)).abs() < 1e-10);
        assert!(m.cov_pos > 0.0);
        assert!((m.var_pos - (0.25 - 1.0 / (8.0 * PI))).abs() < 1e-10);
    }

    #[test]
    fn nested_triple_integral_agrees_with_reduction() {
        let nested = triple_integral_nested::<f64>(1e-6).unwrap();
        assert!((nested.value - 1.0 / (2.0 * PI)).abs() < 1e-4, "{}", nested.value);
    }

    #[test]
    fn works_in_single_precision() {
        let r = integrate_1d(|t: f32| (-t).exp(), 0.0, f32::INFINITY, 1e-5).unwrap();
        assert!((r.value - 1.0).abs() < 1e-4);
        let m = gaussian_pospart_moments::<f32>().unwrap();
        assert!((m.mean_pos - 0.199471).abs() < 1e-4);
    }
}
