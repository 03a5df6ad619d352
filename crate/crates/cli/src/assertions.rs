//! Built-in assertions over a task's result JSON.
//!
//! A path is a `/`-separated list of object keys or array indices; `*`
//! matches every element. An assertion passes when the path matches at least
//! one value and every match satisfies the check.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    Approx { value: f64, tol: f64 },
    Le { value: f64 },
    Ge { value: f64 },
    Lt { value: f64 },
    Gt { value: f64 },
    AbsLe { value: f64 },
    Between { lo: f64, hi: f64 },
    Eq { value: Value },
    IsTrue,
    IsFalse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assertion {
    pub path: String,
    #[serde(flatten)]
    pub check: Check,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssertionOutcome {
    pub path: String,
    pub check: Check,
    pub matched: usize,
    pub passed: bool,
    /// First failing value, or the first match when all pass.
    pub observed: Value,
}

impl Assertion {
    pub fn validate(&self) -> Result<(), CliError> {
        if !self.path.starts_with('/') {
            return Err(CliError::Config(format!(
                "assertion path `{}` must start with '/'",
                self.path
            )));
        }
        let finite = |x: f64| x.is_finite();
        let ok = match &self.check {
            Check::Approx { value, tol } => finite(*value) && *tol >= 0.0,
            Check::Between { lo, hi } => lo <= hi,
            Check::Le { value } | Check::Ge { value } | Check::Lt { value } | Check::Gt { value } => !value.is_nan(),
            Check::AbsLe { value } => *value >= 0.0,
            Check::Eq { .. } | Check::IsTrue | Check::IsFalse => true,
        };
        if !ok {
            return Err(CliError::Config(format!(
                "assertion on `{}` has invalid bounds",
                self.path
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, root: &Value) -> AssertionOutcome {
        let mut hits = Vec::new();
        let segments: Vec<&str> = self.path.split('/').skip(1).filter(|s| !s.is_empty()).collect();
        select(root, &segments, &mut hits);
        let failing = hits.iter().find(|v| !self.check.holds(v));
        AssertionOutcome {
            path: self.path.clone(),
            check: self.check.clone(),
            matched: hits.len(),
            passed: !hits.is_empty() && failing.is_none(),
            observed: failing.or(hits.first()).map(|v| (*v).clone()).unwrap_or(Value::Null),
        }
    }
}

fn select<'a>(v: &'a Value, path: &[&str], out: &mut Vec<&'a Value>) {
    let Some((head, rest)) = path.split_first() else {
        out.push(v);
        return;
    };
    match (v, *head) {
        (Value::Array(xs), "*") => xs.iter().for_each(|x| select(x, rest, out)),
        (Value::Object(m), "*") => m.values().for_each(|x| select(x, rest, out)),
        (Value::Array(xs), idx) => {
            if let Some(x) = idx.parse::<usize>().ok().and_then(|i| xs.get(i)) {
                select(x, rest, out);
            }
        }
        (Value::Object(m), key) => {
            if let Some(x) = m.get(key) {
                select(x, rest, out);
            }
        }
        _ => {}
    }
}

impl Check {
    fn holds(&self, v: &Value) -> bool {
        match self {
            Check::Eq { value } => match (v.as_f64(), value.as_f64()) {
                (Some(a), Some(b)) => a == b,
                _ => v == value,
            },
            Check::IsTrue => v == &Value::Bool(true),
            Check::IsFalse => v == &Value::Bool(false),
            _ => {
                let Some(x) = v.as_f64() else { return false };
                match *self {
                    Check::Approx { value, tol } => (x - value).abs() <= tol,
                    Check::Le { value } => x <= value,
                    Check::Ge { value } => x >= value,
                    Check::Lt { value } => x < value,
                    Check::Gt { value } => x > value,
                    Check::AbsLe { value } => x.abs() <= value,
                    Check::Between { lo, hi } => lo <= x && x <= hi,
                    _ => unreachable!(),
                }
            }
        }
    }
}
