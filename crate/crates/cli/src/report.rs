//! summary.json and CSV artifacts.

use greenop::Error;
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// Identifier of the formula the check tests.
    pub anchor: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: impl Into<String>, anchor: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), anchor: anchor.into(), value, threshold, pass: value <= threshold }
    }

    /// Passes when `value ≥ threshold`.
    pub fn at_least(name: impl Into<String>, anchor: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), anchor: anchor.into(), value, threshold, pass: value >= threshold }
    }

    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub command: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub wall_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// JSON has no infinities; they are written as the largest finite double.
fn finite(v: f64) -> f64 {
    if v.is_nan() {
        v
    } else {
        v.clamp(f64::MIN, f64::MAX)
    }
}

pub fn write_summary(dir: &Path, s: &Summary) -> Result<(), Error> {
    let mut s = s.clone();
    for c in &mut s.checks {
        c.value = finite(c.value);
        c.threshold = finite(c.threshold);
    }
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&s)? + "\n")?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record(header).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}
