//! Laboratory for strong and weak laws of large numbers under weak
//! dependence: sequence families, hypothesis checkers, the subsequence proof
//! apparatus, Monte Carlo diagnostics, exact oracles and quadrature.
//!
//! Numeric code is generic over [`Scalar`] (`f32`, `f64`); the aliases at the
//! bottom of this file fix `f64` for the common case.
// `!(x > 0)` also rejects NaN; the quadrature nodes are tabulated to full published precision.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod conditions;
pub mod error;
mod exec;
pub mod families;
pub mod montecarlo;
pub mod proofkit;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use families::{FamilyDescriptor, FamilyKind, IidBase, Transform};
pub use scalar::Scalar;

pub type Family = families::SequenceFamily<f64>;
pub type Trajectory = families::Trajectory<f64>;
pub type MomentProfile = families::MomentProfile<f64>;
pub type Normalizer = conditions::NormalizerSpec<f64>;
pub type SeriesReport = conditions::SeriesReport<f64>;
pub type RatioReport = conditions::RatioReport<f64>;
pub type SubsequenceIndex = proofkit::SubsequenceIndex<f64>;
pub type SandwichReport = proofkit::SandwichReport<f64>;
pub type ExperimentResult = montecarlo::ExperimentResult<f64>;

pub type QuadratureResult = quadrature::QuadratureResult<f64>;

pub type Family32 = families::SequenceFamily<f32>;
pub type Trajectory32 = families::Trajectory<f32>;
