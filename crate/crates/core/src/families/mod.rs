//! Random-sequence families: construction, sampling and pointwise transforms.
//!
//! Latent-variable families draw their latents once per trajectory from the
//! latent stream of the trajectory seed (the uniform `X` for the cosine
//! family, the gate `W` for the gated Gaussian) and then fill `X_1..X_N`
//! from the values stream. Trajectories of different horizons with the same
//! seed agree on their common prefix.

mod descriptor;
mod moments;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use descriptor::{FamilyDescriptor, FamilyKind, IidBase, RawDescriptor, Transform, MAX_TRANSFORM_DEPTH};
pub use moments::{AnalyticMoment, IndexFn, MomentProfile, PairCovariance, PairFn, TailFn};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::scalar::Scalar;

/// Default cap on trajectory length.
pub const DEFAULT_MAX_HORIZON: u64 = 100_000_000;

#[derive(Debug, Clone, Copy)]
enum Base<T> {
    Cosine,
    GatedGaussian,
    Step,
    Exponential { rate: T },
    Uniform { a: T, b: T },
    BernoulliScaled { p: T, scale: T },
    Constant { value: T },
}

#[derive(Clone)]
enum Stage<T> {
    Truncate,
    PositivePart,
    NegativePart,
    /// `x - offset(n)`.
    Shift(IndexFn<T>),
    Affine {
        a: T,
        b: T,
    },
}

impl<T: Scalar> Stage<T> {
    #[inline]
    fn apply(&self, n: u64, x: T) -> T {
        match self {
            Stage::Truncate => {
                if x <= T::from_count(n) {
                    x
                } else {
                    T::zero()
                }
            }
            Stage::PositivePart => x.max(T::zero()),
            Stage::NegativePart => (-x).max(T::zero()),
            Stage::Shift(off) => x - off(n),
            Stage::Affine { a, b } => *a + *b * x,
        }
    }
}

/// Latent draws shared by every index of one trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Latents<T> {
    /// Uniform `X` on `[-1, 1]` (cosine family).
    pub uniform_x: Option<T>,
    /// Gate `W` in `{0, 1}` (gated Gaussian family).
    pub gate_w: Option<T>,
}

impl<T> Latents<T> {
    pub fn is_empty(&self) -> bool {
        self.uniform_x.is_none() && self.gate_w.is_none()
    }
}

/// One sampled path `X_1..X_N` with prefix sums.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub descriptor: Arc<FamilyDescriptor>,
    pub seed: u64,
    pub values: Vec<T>,
    /// `prefix_sums[k] = X_1 + ... + X_{k+1}`.
    pub prefix_sums: Vec<T>,
    pub latents: Option<Latents<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    /// `X_n`, 1-based.
    pub fn x(&self, n: usize) -> T {
        self.values[n - 1]
    }

    /// `S_n`, 1-based; `S_0 = 0`.
    pub fn s(&self, n: usize) -> T {
        if n == 0 {
            T::zero()
        } else {
            self.prefix_sums[n - 1]
        }
    }
}

/// Running sums with `S_n = S_{n-1} + X_n` evaluated left to right.
pub fn prefix_sums<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut acc = T::zero();
    values
        .iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect()
}

/// A sampleable family with optional analytic moments. Cheap to clone and
/// safe to share across threads.
#[derive(Clone)]
pub struct SequenceFamily<T: Scalar> {
    descriptor: Arc<FamilyDescriptor>,
    base: Base<T>,
    stages: Vec<Stage<T>>,
    moments: Option<MomentProfile<T>>,
    max_horizon: u64,
}

impl<T: Scalar> std::fmt::Debug for SequenceFamily<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SequenceFamily")
            .field("descriptor", &self.descriptor)
            .field("moments", &self.moments)
            .field("max_horizon", &self.max_horizon)
            .finish()
    }
}

impl<T: Scalar> SequenceFamily<T> {
    pub fn new(descriptor: &FamilyDescriptor) -> Result<Self> {
        descriptor.validate()?;
        let (base, moments) = match &descriptor.kind {
            FamilyKind::Cosine => (Base::Cosine, MomentProfile::cosine()),
            FamilyKind::GatedGaussian => (Base::GatedGaussian, MomentProfile::gated_gaussian()),
            FamilyKind::Step => (Base::Step, MomentProfile::step()),
            FamilyKind::Iid(IidBase::Exponential { rate }) => {
                let rate = T::lit(*rate);
                (Base::Exponential { rate }, MomentProfile::exponential(rate))
            }
            FamilyKind::Iid(IidBase::Uniform { a, b }) => {
                let (a, b) = (T::lit(*a), T::lit(*b));
                (Base::Uniform { a, b }, MomentProfile::uniform(a, b))
            }
            FamilyKind::Iid(IidBase::BernoulliScaled { p, scale }) => {
                let (p, scale) = (T::lit(*p), T::lit(*scale));
                (
                    Base::BernoulliScaled { p, scale },
                    MomentProfile::bernoulli_scaled(p, scale),
                )
            }
            FamilyKind::Iid(IidBase::Constant { value }) => {
                let value = T::lit(*value);
                (Base::Constant { value }, MomentProfile::constant(value))
            }
        };
        let mut family = SequenceFamily {
            descriptor: Arc::new(FamilyDescriptor {
                kind: descriptor.kind.clone(),
                transforms: Vec::new(),
                label: descriptor.label.clone(),
            }),
            base,
            stages: Vec::new(),
            moments: Some(moments),
            max_horizon: DEFAULT_MAX_HORIZON,
        };
        for t in &descriptor.transforms {
            family = family.transform(*t)?;
        }
        Ok(family)
    }

    pub fn descriptor(&self) -> &FamilyDescriptor {
        &self.descriptor
    }

    pub fn descriptor_arc(&self) -> Arc<FamilyDescriptor> {
        self.descriptor.clone()
    }

    pub fn moments(&self) -> Option<&MomentProfile<T>> {
        self.moments.as_ref()
    }

    pub fn require_moments(&self) -> Result<&MomentProfile<T>> {
        self.moments.as_ref().ok_or_else(|| {
            Error::MomentsUnavailable(format!(
                "family `{}` has no analytic profile",
                self.descriptor.display_label()
            ))
        })
    }

    pub fn max_horizon(&self) -> u64 {
        self.max_horizon
    }

    pub fn with_max_horizon(mut self, max: u64) -> Self {
        self.max_horizon = max;
        self
    }

    /// Replaces the analytic profile. Used for families whose moments are
    /// known from outside the built-in catalogue.
    pub fn with_moments(mut self, moments: Option<MomentProfile<T>>) -> Self {
        self.moments = moments;
        self
    }

    pub fn analytic_moment(&self, n: u64) -> Result<AnalyticMoment<T>> {
        Ok(self.require_moments()?.at(n))
    }

    /// Derived family applying `transform` pointwise after the existing chain.
    pub fn transform(&self, transform: Transform) -> Result<Self> {
        let mut descriptor = (*self.descriptor).clone();
        descriptor.transforms.push(transform);
        descriptor.validate()?;

        let (stage, moments) = match transform {
            Transform::Truncate => (Stage::Truncate, self.moments.as_ref().and_then(|m| m.truncated())),
            Transform::PositivePart => (
                Stage::PositivePart,
                self.moments.as_ref().and_then(|m| m.positive_part()),
            ),
            Transform::NegativePart => (
                Stage::NegativePart,
                self.moments.as_ref().and_then(|m| m.negative_part()),
            ),
            Transform::Affine { a, b } => {
                let (a, b) = (T::lit(a), T::lit(b));
                (Stage::Affine { a, b }, self.moments.as_ref().map(|m| m.affine(a, b)))
            }
            Transform::Center => {
                let m = self.require_moments()?.clone();
                let mean = {
                    let m = m.clone();
                    Arc::new(move |n| m.mean(n)) as IndexFn<T>
                };
                let zero: IndexFn<T> = Arc::new(|_| T::zero());
                let profile = m.shifted(mean.clone(), Some(zero), T::neg_infinity(), T::infinity());
                (Stage::Shift(mean), Some(profile))
            }
            Transform::EssinfShift => {
                let m = self.require_moments()?.clone();
                if !(m.essinf(1).is_finite() && m.global_inf().is_finite()) {
                    return Err(Error::MomentsUnavailable(format!(
                        "essential infimum of `{}` is not finite",
                        self.descriptor.display_label()
                    )));
                }
                let inf = {
                    let m = m.clone();
                    Arc::new(move |n| m.essinf(n)) as IndexFn<T>
                };
                let g_sup = m.global_sup() - m.global_inf();
                let profile = m.shifted(inf.clone(), None, T::zero(), g_sup);
                (Stage::Shift(inf), Some(profile))
            }
        };
        let mut stages = self.stages.clone();
        stages.push(stage);
        Ok(SequenceFamily {
            descriptor: Arc::new(descriptor),
            base: self.base,
            stages,
            moments,
            max_horizon: self.max_horizon,
        })
    }

    fn check_horizon(&self, horizon: usize) -> Result<()> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if horizon as u64 > self.max_horizon {
            return Err(Error::HorizonOverflow {
                requested: horizon as u64,
                max: self.max_horizon,
            });
        }
        Ok(())
    }

    fn draw_latents(&self, seed: u64) -> Latents<T> {
        let mut rng = substream(seed, Stream::Latent);
        match self.base {
            Base::Cosine => Latents {
                uniform_x: Some(T::lit(2.0) * T::sample_unit(&mut rng) - T::one()),
                gate_w: None,
            },
            Base::GatedGaussian => Latents {
                uniform_x: None,
                gate_w: Some(if T::sample_unit(&mut rng) < T::lit(0.5) {
                    T::zero()
                } else {
                    T::one()
                }),
            },
            _ => Latents::default(),
        }
    }

    /// Writes `X_1..X_horizon` into `out` (cleared first) and returns the latents.
    /// Hot path for replication loops; no validation beyond the horizon cap.
    pub fn fill_values(&self, seed: u64, horizon: usize, forced: Option<&Latents<T>>, out: &mut Vec<T>) -> Latents<T> {
        let mut latents = self.draw_latents(seed);
        if let Some(f) = forced {
            if f.uniform_x.is_some() {
                latents.uniform_x = f.uniform_x;
            }
            if f.gate_w.is_some() {
                latents.gate_w = f.gate_w;
            }
        }
        out.clear();
        out.reserve(horizon);
        let mut rng = substream(seed, Stream::Values);
        let two_pi = T::lit(2.0) * T::PI();
        for n in 1..=horizon as u64 {
            let x = match self.base {
                Base::Cosine => {
                    let u = latents.uniform_x.unwrap_or_else(T::zero);
                    (two_pi * T::from_count(n) * u).cos()
                }
                Base::GatedGaussian => {
                    let z = T::sample_standard_normal(&mut rng);
                    if latents.gate_w == Some(T::zero()) {
                        T::zero()
                    } else {
                        latents.gate_w.unwrap_or_else(T::one) * z
                    }
                }
                Base::Step => {
                    if T::sample_unit(&mut rng) < T::lit(0.5) {
                        T::zero()
                    } else {
                        T::from_count(n)
                    }
                }
                Base::Exponential { rate } => T::sample_exp1(&mut rng) / rate,
                Base::Uniform { a, b } => a + (b - a) * T::sample_unit(&mut rng),
                Base::BernoulliScaled { p, scale } => {
                    if T::sample_unit(&mut rng) < p {
                        scale
                    } else {
                        T::zero()
                    }
                }
                Base::Constant { value } => value,
            };
            let x = self.stages.iter().fold(x, |acc, s| s.apply(n, acc));
            out.push(x);
        }
        latents
    }

    pub fn sample_trajectory(&self, horizon: usize, seed: u64) -> Result<Trajectory<T>> {
        self.sample_with_latents(horizon, seed, None)
    }

    /// Like [`Self::sample_trajectory`] but with some latents pinned.
    pub fn sample_with_latents(&self, horizon: usize, seed: u64, forced: Option<&Latents<T>>) -> Result<Trajectory<T>> {
        self.check_horizon(horizon)?;
        let mut values = Vec::new();
        let latents = self.fill_values(seed, horizon, forced, &mut values);
        let prefix_sums = prefix_sums(&values);
        Ok(Trajectory {
            descriptor: self.descriptor.clone(),
            seed,
            values,
            prefix_sums,
            latents: (!latents.is_empty()).then_some(latents),
        })
    }

    /// Checks a horizon against the cap without sampling.
    pub fn validate_horizon(&self, horizon: usize) -> Result<()> {
        self.check_horizon(horizon)
    }
}

pub fn make_family<T: Scalar>(descriptor: &FamilyDescriptor) -> Result<SequenceFamily<T>> {
    SequenceFamily::new(descriptor)
}

pub fn sample_trajectory<T: Scalar>(family: &SequenceFamily<T>, horizon: usize, seed: u64) -> Result<Trajectory<T>> {
    family.sample_trajectory(horizon, seed)
}

pub fn analytic_moment<T: Scalar>(family: &SequenceFamily<T>, n: u64) -> Result<AnalyticMoment<T>> {
    family.analytic_moment(n)
}

pub fn transform_family<T: Scalar>(family: &SequenceFamily<T>, transform: Transform) -> Result<SequenceFamily<T>> {
    family.transform(transform)
}

#[cfg(test)]
mod tests;
