//! CSV and JSON rendering for reports. Numbers carry 12 significant digits,
//! column order is fixed per table, and lines end in LF.

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::conditions::{RatioReport, SeriesReport};
use crate::error::{Error, Result};
use crate::montecarlo::ExperimentResult;
use crate::proofkit::{KappaRecord, SandwichReport, SubsequenceIndex};
use crate::scalar::Scalar;

pub const SIGNIFICANT_DIGITS: usize = 12;

pub const EXPERIMENT_HEADER: [&str; 7] = [
    "checkpoint",
    "mean_dev",
    "stddev",
    "q05",
    "q50",
    "q95",
    "frac_within_tol",
];
pub const SERIES_HEADER: [&str; 3] = ["n", "term", "partial_sum"];
pub const RATIO_HEADER: [&str; 5] = ["n", "ratio", "stderr", "sum_variance", "variance_sum"];
pub const SANDWICH_HEADER: [&str; 10] = [
    "seed", "n", "k_minus", "k_plus", "lower", "mid_lo", "mid", "mid_hi", "upper", "violated",
];
pub const KAPPA_HEADER: [&str; 6] = ["j", "kappa_j", "kappa_plus", "kappa_minus", "bound", "holds"];

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// `%g`-style text: plain notation for moderate magnitudes, exponent otherwise.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_sig(x);
    if r == 0.0 {
        return "0".into();
    }
    let mag = r.abs();
    if (1e-5..1e15).contains(&mag) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

fn fmt<T: Scalar>(x: T) -> String {
    fmt_num(x.as_f64())
}

/// Rewrites every non-integer JSON number to 12 significant digits.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(xs) => xs.iter_mut().for_each(round_json),
        Value::Object(m) => m.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with rounded numbers and a trailing newline.
pub fn to_json_string<S: Serialize + ?Sized>(value: &S) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends another table with the same header.
    pub fn extend(&mut self, other: Table) -> Result<()> {
        if other.header != self.header {
            return Err(Error::InvalidArgument(
                "cannot concatenate tables with different headers".into(),
            ));
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

pub fn experiment_table<T: Scalar>(r: &ExperimentResult<T>) -> Table {
    let mut t = Table::new(&EXPERIMENT_HEADER);
    for c in &r.per_checkpoint {
        t.push(vec![
            c.checkpoint.to_string(),
            fmt(c.mean_dev),
            fmt(c.stddev),
            fmt(c.q05),
            fmt(c.q50),
            fmt(c.q95),
            fmt(c.frac_within_tol),
        ]);
    }
    t
}

/// One row per `n = 1..=horizon`.
pub fn series_table<T: Scalar>(r: &SeriesReport<T>) -> Table {
    let mut t = Table::new(&SERIES_HEADER);
    for (k, (term, s)) in r.terms.iter().zip(&r.partial_sums).enumerate() {
        t.push(vec![(k + 1).to_string(), fmt(*term), fmt(*s)]);
    }
    t
}

pub fn ratio_table<T: Scalar>(r: &RatioReport<T>) -> Table {
    let mut t = Table::new(&RATIO_HEADER);
    for (k, n) in r.n_grid.iter().enumerate() {
        t.push(vec![
            n.to_string(),
            fmt(r.ratios[k]),
            fmt(r.stderrs[k]),
            fmt(r.sum_variances[k]),
            fmt(r.variance_sums[k]),
        ]);
    }
    t
}

pub fn sandwich_table<T: Scalar>(r: &SandwichReport<T>) -> Table {
    let mut t = Table::new(&SANDWICH_HEADER);
    for rec in &r.records {
        t.push(vec![
            r.seed.to_string(),
            rec.n.to_string(),
            rec.k_minus.to_string(),
            rec.k_plus.to_string(),
            fmt(rec.lower),
            fmt(rec.mid_lo),
            fmt(rec.mid),
            fmt(rec.mid_hi),
            fmt(rec.upper),
            rec.violated.to_string(),
        ]);
    }
    t
}

pub fn kappa_table<T: Scalar>(records: &[KappaRecord<T>]) -> Table {
    let mut t = Table::new(&KAPPA_HEADER);
    for k in records {
        t.push(vec![
            k.j.to_string(),
            fmt(k.kappa_j),
            fmt(k.kappa_plus),
            fmt(k.kappa_minus),
            fmt(k.bound),
            k.holds.to_string(),
        ]);
    }
    t
}

/// Summary without the per-`n` records: violations as a count, details listed separately.
pub fn sandwich_summary<T: Scalar>(r: &SandwichReport<T>) -> Value {
    json!({
        "seed": r.seed,
        "alpha": r.alpha.as_f64(),
        "epsilon": r.epsilon.as_f64(),
        "a": r.a.as_f64(),
        "bound_symbol": r.bound_symbol,
        "records": r.records.len(),
        "violations": r.violations.len(),
        "violation_details": r.violations,
        "max_residual": r.max_residual.as_f64(),
        "tolerance": r.tolerance,
    })
}

/// Index metadata without the cell map.
pub fn index_summary<T: Scalar>(index: &SubsequenceIndex<T>) -> Value {
    let mut m = Map::new();
    m.insert("alpha".into(), json!(index.alpha.as_f64()));
    m.insert("epsilon".into(), json!(index.epsilon.as_f64()));
    m.insert("a".into(), json!(index.a.as_f64()));
    m.insert("a_source".into(), json!(index.a_source));
    m.insert("l".into(), json!(index.l));
    m.insert("horizon".into(), json!(index.horizon));
    m.insert("max_level".into(), json!(index.max_level));
    m.insert("cells".into(), json!(index.cells.len()));
    Value::Object(m)
}
