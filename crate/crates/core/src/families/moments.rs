//! Analytic moment profiles and their propagation through transforms.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::scalar::{normal_sf, Scalar};
use crate::stats::CompensatedSum;

pub type IndexFn<T> = Arc<dyn Fn(u64) -> T + Send + Sync>;
/// `(n, t) -> P(X_n > t)`.
pub type TailFn<T> = Arc<dyn Fn(u64, T) -> T + Send + Sync>;
pub type PairFn<T> = Arc<dyn Fn(u64, u64) -> T + Send + Sync>;

/// Off-diagonal covariance structure `Cov(X_i, X_j)`, `i != j`.
#[derive(Clone)]
pub enum PairCovariance<T> {
    Uncorrelated,
    /// Same covariance for every distinct pair.
    Constant(T),
    Function(PairFn<T>),
}

impl<T: Scalar> PairCovariance<T> {
    fn scaled(&self, factor: T) -> Self {
        match self {
            PairCovariance::Uncorrelated => PairCovariance::Uncorrelated,
            PairCovariance::Constant(c) => PairCovariance::Constant(*c * factor),
            PairCovariance::Function(f) => {
                let f = f.clone();
                PairCovariance::Function(Arc::new(move |i, j| f(i, j) * factor))
            }
        }
    }
}

/// Closed-form lineage used to decide which transforms keep exact moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Shape<T> {
    Cosine,
    GatedGaussian,
    Exponential {
        rate: T,
    },
    /// Surely `X_n <= n` for every `n`.
    IndexBounded,
    Other,
}

/// Per-index moments of a family. `mean_sum`, `tail` and `pair_cov` are
/// optional; `mean_sum` falls back to summing `mean` when no closed form is known.
#[derive(Clone)]
pub struct MomentProfile<T> {
    mean: IndexFn<T>,
    var: IndexFn<T>,
    mean_sum: Option<IndexFn<T>>,
    essinf: IndexFn<T>,
    esssup: IndexFn<T>,
    tail: Option<TailFn<T>>,
    pair_cov: Option<PairCovariance<T>>,
    /// `inf_n essinf X_n` (may be `-inf`).
    global_inf: T,
    /// `sup_n esssup X_n` (may be `+inf`).
    global_sup: T,
    pub(crate) shape: Shape<T>,
}

impl<T: Scalar> fmt::Debug for MomentProfile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MomentProfile")
            .field("mean(1)", &self.mean(1))
            .field("var(1)", &self.var(1))
            .field("global_inf", &self.global_inf)
            .field("global_sup", &self.global_sup)
            .field("has_tail", &self.tail.is_some())
            .field("has_pair_cov", &self.pair_cov.is_some())
            .finish()
    }
}

/// [`MomentProfile`] evaluated at one index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMoment<T> {
    pub mean: T,
    pub var: T,
    pub mean_sum: T,
    pub essinf: T,
}

fn constant_fn<T: Scalar>(c: T) -> IndexFn<T> {
    Arc::new(move |_| c)
}

impl<T: Scalar> MomentProfile<T> {
    /// A profile with the mandatory pieces; refine with the `with_*` builders.
    pub fn new(mean: IndexFn<T>, var: IndexFn<T>, essinf: IndexFn<T>, esssup: IndexFn<T>) -> Self {
        Self {
            mean,
            var,
            mean_sum: None,
            essinf,
            esssup,
            tail: None,
            pair_cov: None,
            global_inf: T::neg_infinity(),
            global_sup: T::infinity(),
            shape: Shape::Other,
        }
    }

    pub fn with_mean_sum(mut self, f: IndexFn<T>) -> Self {
        self.mean_sum = Some(f);
        self
    }

    pub fn with_tail(mut self, f: TailFn<T>) -> Self {
        self.tail = Some(f);
        self
    }

    pub fn with_pair_cov(mut self, c: PairCovariance<T>) -> Self {
        self.pair_cov = Some(c);
        self
    }

    /// Uniform bounds over all indices.
    pub fn with_global_bounds(mut self, inf: T, sup: T) -> Self {
        self.global_inf = inf;
        self.global_sup = sup;
        self
    }

    pub(crate) fn with_shape(mut self, shape: Shape<T>) -> Self {
        self.shape = shape;
        self
    }

    pub fn mean(&self, n: u64) -> T {
        (self.mean)(n)
    }

    pub fn var(&self, n: u64) -> T {
        (self.var)(n)
    }

    pub fn has_closed_mean_sum(&self) -> bool {
        self.mean_sum.is_some()
    }

    /// `E S_n`; a compensated sum of `mean` when no closed form is attached.
    pub fn mean_sum(&self, n: u64) -> T {
        match &self.mean_sum {
            Some(f) => f(n),
            None => {
                let mut acc = CompensatedSum::new();
                for k in 1..=n {
                    acc.add(self.mean(k));
                }
                acc.value()
            }
        }
    }

    /// `E S_1, ..., E S_horizon` in one pass.
    pub fn mean_sum_path(&self, horizon: usize) -> Vec<T> {
        match &self.mean_sum {
            Some(f) => (1..=horizon as u64).map(|n| f(n)).collect(),
            None => {
                let mut acc = CompensatedSum::new();
                (1..=horizon as u64)
                    .map(|k| {
                        acc.add(self.mean(k));
                        acc.value()
                    })
                    .collect()
            }
        }
    }

    pub fn essinf(&self, n: u64) -> T {
        (self.essinf)(n)
    }

    pub fn esssup(&self, n: u64) -> T {
        (self.esssup)(n)
    }

    pub fn global_inf(&self) -> T {
        self.global_inf
    }

    pub fn global_sup(&self) -> T {
        self.global_sup
    }

    pub fn is_nonnegative(&self) -> bool {
        self.global_inf >= T::zero()
    }

    pub fn has_tail(&self) -> bool {
        self.tail.is_some()
    }

    /// `P(X_n > t)` if a tail function is attached.
    pub fn tail(&self, n: u64, t: T) -> Option<T> {
        self.tail.as_ref().map(|f| f(n, t))
    }

    pub fn tail_fn(&self) -> Option<TailFn<T>> {
        self.tail.clone()
    }

    pub fn pair_covariance(&self) -> Option<&PairCovariance<T>> {
        self.pair_cov.as_ref()
    }

    /// `Cov(X_i, X_j)`; the variance when `i == j`.
    pub fn pair_cov(&self, i: u64, j: u64) -> Option<T> {
        if i == j {
            return Some(self.var(i));
        }
        self.pair_cov.as_ref().map(|c| match c {
            PairCovariance::Uncorrelated => T::zero(),
            PairCovariance::Constant(v) => *v,
            PairCovariance::Function(f) => f(i, j),
        })
    }

    pub fn is_pairwise_uncorrelated(&self) -> bool {
        matches!(self.pair_cov, Some(PairCovariance::Uncorrelated))
    }

    /// `Σ_{k<=n} V X_k`.
    pub fn variance_sum(&self, n: u64) -> T {
        let mut acc = CompensatedSum::new();
        for k in 1..=n {
            acc.add(self.var(k));
        }
        acc.value()
    }

    /// `V S_n` from the covariance structure, if known.
    pub fn sum_variance(&self, n: u64) -> Option<T> {
        let diagonal = self.variance_sum(n);
        match self.pair_cov.as_ref()? {
            PairCovariance::Uncorrelated => Some(diagonal),
            PairCovariance::Constant(c) => {
                let pairs = T::from_count(n) * T::from_count(n.saturating_sub(1));
                Some(diagonal + pairs * *c)
            }
            PairCovariance::Function(f) => {
                let mut acc = CompensatedSum::new();
                acc.add(diagonal);
                for i in 1..=n {
                    for j in (i + 1)..=n {
                        acc.add(T::lit(2.0) * f(i, j));
                    }
                }
                Some(acc.value())
            }
        }
    }

    pub fn at(&self, n: u64) -> AnalyticMoment<T> {
        AnalyticMoment {
            mean: self.mean(n),
            var: self.var(n),
            mean_sum: self.mean_sum(n),
            essinf: self.essinf(n),
        }
    }

    // ---- built-in families ----

    pub(crate) fn cosine() -> Self {
        let half = T::lit(0.5);
        Self::new(
            constant_fn(T::zero()),
            constant_fn(half),
            constant_fn(-T::one()),
            constant_fn(T::one()),
        )
        .with_mean_sum(constant_fn(T::zero()))
        // 2πnX mod 2π is uniform, so P(cos U > t) = arccos(t)/π on [-1, 1].
        .with_tail(Arc::new(|_, t: T| {
            if t < -T::one() {
                T::one()
            } else if t >= T::one() {
                T::zero()
            } else {
                t.acos() / T::PI()
            }
        }))
        .with_pair_cov(PairCovariance::Uncorrelated)
        .with_global_bounds(-T::one(), T::one())
        .with_shape(Shape::Cosine)
    }

    pub(crate) fn gated_gaussian() -> Self {
        let half = T::lit(0.5);
        Self::new(
            constant_fn(T::zero()),
            constant_fn(half),
            constant_fn(T::neg_infinity()),
            constant_fn(T::infinity()),
        )
        .with_mean_sum(constant_fn(T::zero()))
        .with_tail(Arc::new(move |_, t: T| {
            let atom = if t < T::zero() { half } else { T::zero() };
            atom + half * normal_sf(t)
        }))
        .with_pair_cov(PairCovariance::Uncorrelated)
        .with_shape(Shape::GatedGaussian)
    }

    pub(crate) fn step() -> Self {
        let half = T::lit(0.5);
        let quarter = T::lit(0.25);
        Self::new(
            Arc::new(move |n| T::from_count(n) * half),
            Arc::new(move |n| {
                let n = T::from_count(n);
                n * n * quarter
            }),
            constant_fn(T::zero()),
            Arc::new(|n| T::from_count(n)),
        )
        .with_mean_sum(Arc::new(move |n| T::from_count(n) * T::from_count(n + 1) * quarter))
        .with_tail(Arc::new(move |n, t: T| {
            if t < T::zero() {
                T::one()
            } else if t < T::from_count(n) {
                half
            } else {
                T::zero()
            }
        }))
        .with_pair_cov(PairCovariance::Uncorrelated)
        .with_global_bounds(T::zero(), T::infinity())
        .with_shape(Shape::IndexBounded)
    }

    pub(crate) fn exponential(rate: T) -> Self {
        let mean = T::one() / rate;
        Self::new(
            constant_fn(mean),
            constant_fn(mean * mean),
            constant_fn(T::zero()),
            constant_fn(T::infinity()),
        )
        .with_mean_sum(Arc::new(move |n| T::from_count(n) * mean))
        .with_tail(Arc::new(
            move |_, t: T| {
                if t < T::zero() {
                    T::one()
                } else {
                    (-rate * t).exp()
                }
            },
        ))
        .with_pair_cov(PairCovariance::Uncorrelated)
        .with_global_bounds(T::zero(), T::infinity())
        .with_shape(Shape::Exponential { rate })
    }

    pub(crate) fn uniform(a: T, b: T) -> Self {
        let two = T::lit(2.0);
        let mean = (a + b) / two;
        let var = (b - a) * (b - a) / T::lit(12.0);
        Self::new(constant_fn(mean), constant_fn(var), constant_fn(a), constant_fn(b))
            .with_mean_sum(Arc::new(move |n| T::from_count(n) * mean))
            .with_tail(Arc::new(move |_, t: T| {
                ((b - t) / (b - a)).max(T::zero()).min(T::one())
            }))
            .with_pair_cov(PairCovariance::Uncorrelated)
            .with_global_bounds(a, b)
            .with_shape(if b <= T::one() {
                Shape::IndexBounded
            } else {
                Shape::Other
            })
    }

    pub(crate) fn bernoulli_scaled(p: T, scale: T) -> Self {
        let mean = p * scale;
        let var = scale * scale * p * (T::one() - p);
        // Support points carrying positive mass.
        let (lo, hi) = if p <= T::zero() {
            (T::zero(), T::zero())
        } else if p >= T::one() {
            (scale, scale)
        } else {
            (scale.min(T::zero()), scale.max(T::zero()))
        };
        Self::new(constant_fn(mean), constant_fn(var), constant_fn(lo), constant_fn(hi))
            .with_mean_sum(Arc::new(move |n| T::from_count(n) * mean))
            .with_tail(Arc::new(move |_, t: T| {
                let mut tail = T::zero();
                if scale > t {
                    tail += p;
                }
                if T::zero() > t {
                    tail += T::one() - p;
                }
                tail
            }))
            .with_pair_cov(PairCovariance::Uncorrelated)
            .with_global_bounds(lo, hi)
            .with_shape(if hi <= T::one() {
                Shape::IndexBounded
            } else {
                Shape::Other
            })
    }

    pub(crate) fn constant(c: T) -> Self {
        Self::new(constant_fn(c), constant_fn(T::zero()), constant_fn(c), constant_fn(c))
            .with_mean_sum(Arc::new(move |n| T::from_count(n) * c))
            .with_tail(Arc::new(move |_, t: T| if c > t { T::one() } else { T::zero() }))
            .with_pair_cov(PairCovariance::Uncorrelated)
            .with_global_bounds(c, c)
            .with_shape(if c <= T::one() {
                Shape::IndexBounded
            } else {
                Shape::Other
            })
    }

    // ---- transforms ----

    /// `a + b·X_n`.
    pub(crate) fn affine(&self, a: T, b: T) -> Self {
        let base = self.clone();
        let scale = move |x: T| if b == T::zero() { T::zero() } else { b * x };
        let (inf_src, sup_src): (IndexFn<T>, IndexFn<T>) = if b >= T::zero() {
            (self.essinf.clone(), self.esssup.clone())
        } else {
            (self.esssup.clone(), self.essinf.clone())
        };
        let (g_inf, g_sup) = if b >= T::zero() {
            (a + scale(self.global_inf), a + scale(self.global_sup))
        } else {
            (a + scale(self.global_sup), a + scale(self.global_inf))
        };
        let m = base.mean.clone();
        let v = base.var.clone();
        let mut out = Self::new(
            Arc::new(move |n| a + b * m(n)),
            Arc::new(move |n| b * b * v(n)),
            Arc::new(move |n| a + scale(inf_src(n))),
            Arc::new(move |n| a + scale(sup_src(n))),
        )
        .with_global_bounds(g_inf, g_sup);
        if let Some(ms) = base.mean_sum.clone() {
            out = out.with_mean_sum(Arc::new(move |n| T::from_count(n) * a + b * ms(n)));
        }
        if let Some(tail) = base.tail.clone() {
            if b > T::zero() {
                out = out.with_tail(Arc::new(move |n, t| tail(n, (t - a) / b)));
            } else if b == T::zero() {
                out = out.with_tail(Arc::new(move |_, t| if a > t { T::one() } else { T::zero() }));
            }
        }
        if let Some(c) = &base.pair_cov {
            out = out.with_pair_cov(c.scaled(b * b));
        }
        out
    }

    /// `X_n - offset(n)`.
    pub(crate) fn shifted(&self, offset: IndexFn<T>, closed_mean_sum: Option<IndexFn<T>>, g_inf: T, g_sup: T) -> Self {
        let base = self.clone();
        let (m, o1) = (base.mean.clone(), offset.clone());
        let (inf, o2) = (base.essinf.clone(), offset.clone());
        let (sup, o3) = (base.esssup.clone(), offset.clone());
        let mut out = Self::new(
            Arc::new(move |n| m(n) - o1(n)),
            base.var.clone(),
            Arc::new(move |n| inf(n) - o2(n)),
            Arc::new(move |n| sup(n) - o3(n)),
        )
        .with_global_bounds(g_inf, g_sup);
        if let Some(ms) = closed_mean_sum {
            out = out.with_mean_sum(ms);
        }
        if let Some(tail) = base.tail.clone() {
            let o4 = offset;
            out = out.with_tail(Arc::new(move |n, t| tail(n, t + o4(n))));
        }
        if let Some(c) = base.pair_cov.clone() {
            out = out.with_pair_cov(c);
        }
        out
    }

    /// Law of `max(X_n, 0)` when it is known in closed form.
    pub(crate) fn positive_part(&self) -> Option<Self> {
        if self.global_inf >= T::zero() {
            return Some(self.clone());
        }
        if self.global_sup <= T::zero() {
            return Some(Self::constant(T::zero()));
        }
        match self.shape {
            Shape::Cosine => Some(Self::cosine_part()),
            Shape::GatedGaussian => Some(Self::gated_part()),
            _ => None,
        }
    }

    /// Law of `-min(X_n, 0)` when it is known in closed form.
    pub(crate) fn negative_part(&self) -> Option<Self> {
        if self.global_inf >= T::zero() {
            return Some(Self::constant(T::zero()));
        }
        if self.global_sup <= T::zero() {
            let mut p = self.affine(T::zero(), -T::one());
            p.shape = Shape::Other;
            return Some(p);
        }
        // Both laws are symmetric, so X⁻ has the same joint law as X⁺.
        match self.shape {
            Shape::Cosine => Some(Self::cosine_part()),
            Shape::GatedGaussian => Some(Self::gated_part()),
            _ => None,
        }
    }

    /// Law of `X_n · 1{X_n <= n}` when it is known in closed form.
    pub(crate) fn truncated(&self) -> Option<Self> {
        if self.global_sup <= T::one() || self.shape == Shape::IndexBounded {
            return Some(self.clone());
        }
        match self.shape {
            Shape::Exponential { rate } => Some(Self::truncated_exponential(rate)),
            _ => None,
        }
    }

    fn cosine_part() -> Self {
        let pi = T::PI();
        let mean = T::one() / pi;
        let var = T::lit(0.25) - mean * mean;
        Self::new(
            constant_fn(mean),
            constant_fn(var),
            constant_fn(T::zero()),
            constant_fn(T::one()),
        )
        .with_mean_sum(Arc::new(move |n| T::from_count(n) * mean))
        .with_tail(Arc::new(move |_, t: T| {
            if t < T::zero() {
                T::one()
            } else if t >= T::one() {
                T::zero()
            } else {
                t.acos() / pi
            }
        }))
        .with_global_bounds(T::zero(), T::one())
        .with_shape(Shape::IndexBounded)
    }

    fn gated_part() -> Self {
        let half = T::lit(0.5);
        let two_pi = T::lit(2.0) * T::PI();
        // E X⁺ = ½ E Z⁺ = 1/(2√(2π)); E (X⁺)² = ½ E (Z⁺)² = ¼.
        let mean = half / two_pi.sqrt();
        let var = T::lit(0.25) - mean * mean;
        // E(X_i⁺ X_j⁺) = ½ (E Z⁺)² = 1/(4π), so Cov = 1/(4π) - 1/(8π) = 1/(8π).
        let cov = T::one() / (T::lit(4.0) * two_pi);
        Self::new(
            constant_fn(mean),
            constant_fn(var),
            constant_fn(T::zero()),
            constant_fn(T::infinity()),
        )
        .with_mean_sum(Arc::new(move |n| T::from_count(n) * mean))
        .with_tail(Arc::new(
            move |_, t: T| {
                if t < T::zero() {
                    T::one()
                } else {
                    half * normal_sf(t)
                }
            },
        ))
        .with_pair_cov(PairCovariance::Constant(cov))
        .with_global_bounds(T::zero(), T::infinity())
        .with_shape(Shape::Other)
    }

    fn truncated_exponential(rate: T) -> Self {
        let two = T::lit(2.0);
        let first = move |n: u64| {
            let x = rate * T::from_count(n);
            (T::one() - (-x).exp() * (T::one() + x)) / rate
        };
        let second = move |n: u64| {
            let x = rate * T::from_count(n);
            (two - (-x).exp() * (x * x + two * x + two)) / (rate * rate)
        };
        Self::new(
            Arc::new(first),
            Arc::new(move |n| {
                let m = first(n);
                (second(n) - m * m).max(T::zero())
            }),
            constant_fn(T::zero()),
            Arc::new(|n| T::from_count(n)),
        )
        .with_tail(Arc::new(move |n, t: T| {
            let cap = T::from_count(n);
            if t < T::zero() {
                T::one()
            } else if t >= cap {
                T::zero()
            } else {
                (-rate * t).exp() - (-rate * cap).exp()
            }
        }))
        .with_pair_cov(PairCovariance::Uncorrelated)
        .with_global_bounds(T::zero(), T::infinity())
        .with_shape(Shape::IndexBounded)
    }
}
