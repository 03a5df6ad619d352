//! JSON-facing description of a sequence family.
//!
//! ```json
//! {"kind": "iid", "params": {"base": "exponential", "rate": 1.0}, "transforms": ["truncate"]}
//! ```
//!
//! `kind` is one of `cosine`, `gated_gaussian`, `step`, `iid`, or
//! `transformed`; the last wraps a base descriptor plus one transform and is
//! flattened into the `transforms` chain on load.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Longest accepted transform chain.
pub const MAX_TRANSFORM_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "base", rename_all = "snake_case", deny_unknown_fields)]
pub enum IidBase {
    Exponential {
        rate: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    /// `scale` with probability `p`, otherwise 0.
    BernoulliScaled {
        p: f64,
        scale: f64,
    },
    /// Degenerate at `value`.
    Constant {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    /// `X_n = cos(2πnX)`, `X ~ U[-1, 1]`.
    Cosine,
    /// `X_n = W·Z_n`, `W ~ Bernoulli(1/2)`, `Z_n ~ N(0, 1)` i.i.d.
    GatedGaussian,
    /// `P(X_n = n) = P(X_n = 0) = 1/2`, independent across `n`.
    Step,
    Iid(IidBase),
}

/// Pointwise map applied to `X_n` at every index `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// `X_n · 1{X_n <= n}`.
    Truncate,
    PositivePart,
    NegativePart,
    /// `X_n - E X_n`.
    Center,
    /// `X_n - essinf X_n`.
    EssinfShift,
    /// `a + b·X_n`.
    Affine {
        a: f64,
        b: f64,
    },
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Truncate => write!(f, "truncate"),
            Transform::PositivePart => write!(f, "positive_part"),
            Transform::NegativePart => write!(f, "negative_part"),
            Transform::Center => write!(f, "center"),
            Transform::EssinfShift => write!(f, "essinf_shift"),
            Transform::Affine { a, b } => write!(f, "affine({a},{b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDescriptor", into = "RawDescriptor")]
pub struct FamilyDescriptor {
    pub kind: FamilyKind,
    /// Applied in order, innermost first.
    pub transforms: Vec<Transform>,
    pub label: Option<String>,
}

impl FamilyDescriptor {
    pub fn new(kind: FamilyKind) -> Self {
        Self {
            kind,
            transforms: Vec::new(),
            label: None,
        }
    }

    pub fn cosine() -> Self {
        Self::new(FamilyKind::Cosine)
    }

    pub fn gated_gaussian() -> Self {
        Self::new(FamilyKind::GatedGaussian)
    }

    pub fn step() -> Self {
        Self::new(FamilyKind::Step)
    }

    pub fn iid(base: IidBase) -> Self {
        Self::new(FamilyKind::Iid(base))
    }

    pub fn exponential(rate: f64) -> Self {
        Self::iid(IidBase::Exponential { rate })
    }

    pub fn constant(value: f64) -> Self {
        Self::iid(IidBase::Constant { value })
    }

    /// `1 + cos(2πnX)`.
    pub fn shifted_cosine() -> Self {
        Self::cosine().with(Transform::Affine { a: 1.0, b: 1.0 })
    }

    pub fn with(mut self, t: Transform) -> Self {
        self.transforms.push(t);
        self
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn display_label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let mut s = match &self.kind {
            FamilyKind::Cosine => "cosine".to_string(),
            FamilyKind::GatedGaussian => "gated_gaussian".to_string(),
            FamilyKind::Step => "step".to_string(),
            FamilyKind::Iid(IidBase::Exponential { rate }) => format!("iid exponential({rate})"),
            FamilyKind::Iid(IidBase::Uniform { a, b }) => format!("iid uniform({a},{b})"),
            FamilyKind::Iid(IidBase::BernoulliScaled { p, scale }) => {
                format!("iid bernoulli_scaled({p},{scale})")
            }
            FamilyKind::Iid(IidBase::Constant { value }) => format!("constant({value})"),
        };
        for t in &self.transforms {
            s = format!("{t}[{s}]");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.transforms.len() > MAX_TRANSFORM_DEPTH {
            return Err(Error::TransformDepth {
                depth: self.transforms.len(),
                max: MAX_TRANSFORM_DEPTH,
            });
        }
        if let FamilyKind::Iid(base) = &self.kind {
            validate_base(base)?;
        }
        for t in &self.transforms {
            if let Transform::Affine { a, b } = t {
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidParams(format!(
                        "affine coefficients must be finite, got a = {a}, b = {b}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawDescriptor = serde_json::from_str(text).map_err(|e| Error::InvalidParams(e.to_string()))?;
        Self::try_from(raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("descriptor serialization is infallible")
    }
}

fn validate_base(base: &IidBase) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidParams(msg));
    match *base {
        IidBase::Exponential { rate } => {
            if !(rate > 0.0 && rate.is_finite()) {
                return bad(format!("exponential rate must be positive and finite, got {rate}"));
            }
        }
        IidBase::Uniform { a, b } => {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return bad(format!("uniform requires finite a < b, got a = {a}, b = {b}"));
            }
        }
        IidBase::BernoulliScaled { p, scale } => {
            if !(0.0..=1.0).contains(&p) || !scale.is_finite() {
                return bad(format!(
                    "bernoulli_scaled requires p in [0, 1] and finite scale, got p = {p}, scale = {scale}"
                ));
            }
        }
        IidBase::Constant { value } => {
            if !value.is_finite() {
                return bad(format!("constant value must be finite, got {value}"));
            }
        }
    }
    Ok(())
}

/// Wire form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDescriptor {
    pub kind: String,
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default)]
    pub transforms: Vec<Transform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn empty_object() -> Value {
    Value::Object(Map::new())
}

fn expect_no_params(kind: &str, params: &Value) -> Result<()> {
    match params {
        Value::Null => Ok(()),
        Value::Object(m) if m.is_empty() => Ok(()),
        other => Err(Error::InvalidParams(format!(
            "kind `{kind}` takes no parameters, got {other}"
        ))),
    }
}

impl TryFrom<RawDescriptor> for FamilyDescriptor {
    type Error = Error;

    fn try_from(raw: RawDescriptor) -> Result<Self> {
        let mut descriptor = match raw.kind.as_str() {
            "cosine" => {
                expect_no_params(&raw.kind, &raw.params)?;
                FamilyDescriptor::cosine()
            }
            "gated_gaussian" => {
                expect_no_params(&raw.kind, &raw.params)?;
                FamilyDescriptor::gated_gaussian()
            }
            "step" => {
                expect_no_params(&raw.kind, &raw.params)?;
                FamilyDescriptor::step()
            }
            "iid" => {
                let base: IidBase =
                    serde_json::from_value(raw.params).map_err(|e| Error::InvalidParams(format!("iid params: {e}")))?;
                FamilyDescriptor::iid(base)
            }
            "transformed" => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct Nested {
                    base: RawDescriptor,
                    transform: Transform,
                }
                let nested: Nested = serde_json::from_value(raw.params)
                    .map_err(|e| Error::InvalidParams(format!("transformed params: {e}")))?;
                let inner = FamilyDescriptor::try_from(nested.base)?;
                inner.with(nested.transform)
            }
            other => return Err(Error::UnknownKind(other.to_string())),
        };
        descriptor.transforms.extend(raw.transforms);
        descriptor.label = raw.label.or(descriptor.label);
        descriptor.validate()?;
        Ok(descriptor)
    }
}

impl From<FamilyDescriptor> for RawDescriptor {
    fn from(d: FamilyDescriptor) -> Self {
        let (kind, params) = match d.kind {
            FamilyKind::Cosine => ("cosine", empty_object()),
            FamilyKind::GatedGaussian => ("gated_gaussian", empty_object()),
            FamilyKind::Step => ("step", empty_object()),
            FamilyKind::Iid(base) => ("iid", serde_json::to_value(base).expect("iid base serializes")),
        };
        RawDescriptor {
            kind: kind.to_string(),
            params,
            transforms: d.transforms,
            label: d.label,
        }
    }
}
