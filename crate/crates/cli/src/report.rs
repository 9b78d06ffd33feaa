//! Report types and deterministic JSON/CSV writers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        }
    }
}

/// How the measured value is compared with the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::AtMost => "<=",
            Comparison::Below => "<",
            Comparison::AtLeast => ">=",
        }
    }

    pub fn holds(self, value: f64, tolerance: f64) -> bool {
        match self {
            Comparison::AtMost => value <= tolerance,
            Comparison::Below => value < tolerance,
            Comparison::AtLeast => value >= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    /// `None` when the quantity could not be measured.
    pub value: Option<f64>,
    pub comparison: Comparison,
    pub tolerance: f64,
}

impl Check {
    pub fn compare(name: &str, value: f64, comparison: Comparison, tolerance: f64) -> Self {
        Check {
            name: name.to_string(),
            status: Status::from_bool(comparison.holds(value, tolerance)),
            value: Some(value),
            comparison,
            tolerance,
        }
    }
}

/// Checks ordered by name. Runtimes are kept apart (`timings.json`) so the
/// report itself is byte-reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub runtimes: BTreeMap<String, f64>,
}

impl VerificationReport {
    pub fn push(&mut self, check: Check, seconds: f64) {
        assert!(
            self.check(&check.name).is_none(),
            "duplicate check {}",
            check.name
        );
        self.runtimes.insert(check.name.clone(), seconds);
        self.checks.push(check);
        self.checks.sort_by(|a, b| a.name.cmp(&b.name));
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == Status::Pass)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_json(&dir.join("report.json"), self)?;
        let mut w = csv_writer(&dir.join("report.csv"))?;
        w.write_record(["check", "status", "value", "comparison", "tolerance"])?;
        for c in &self.checks {
            w.write_record([
                c.name.as_str(),
                c.status.name(),
                &c.value.map(fmt_f64).unwrap_or_default(),
                c.comparison.symbol(),
                &fmt_f64(c.tolerance),
            ])?;
        }
        w.flush()?;
        write_json(&dir.join("timings.json"), &self.runtimes)
    }
}

/// Shortest round-trip decimal form; never locale dependent.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}
