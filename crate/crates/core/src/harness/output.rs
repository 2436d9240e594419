//! Result tables (CSV) and run summaries (JSON).

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// One line of a results table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub model: String,
    pub rho: f64,
    pub t: f64,
    pub observable: String,
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl ResultRow {
    pub fn new(id: &str, model: &str, rho: f64, t: f64, observable: impl Into<String>) -> Self {
        Self {
            experiment_id: id.into(),
            model: model.into(),
            rho,
            t,
            observable: observable.into(),
            value: f64::NAN,
            std_error: f64::NAN,
            n: 0,
        }
    }

    pub fn value(mut self, value: f64, std_error: f64, n: usize) -> Self {
        self.value = value;
        self.std_error = std_error;
        self.n = n;
        self
    }
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["experiment_id", "model", "rho", "t", "observable", "value", "std_error", "n"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_to(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_rows(rows, std::fs::File::create(path)?)
}

/// Pass/fail of one statistical or exact check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl TestOutcome {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Run summary. With `k` statistical tests each at level `alpha`, the
/// probability of any false failure is at most `k * alpha` (Bonferroni).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub experiment_id: String,
    pub master_seed: u64,
    pub alpha: f64,
    pub test_count: usize,
    pub family_alpha: f64,
    pub pass: bool,
    pub tests: Vec<TestOutcome>,
    pub details: serde_json::Value,
}

impl Summary {
    pub fn new(id: &str, master_seed: u64, alpha: f64, tests: Vec<TestOutcome>, details: serde_json::Value) -> Self {
        let k = tests.len();
        Self {
            experiment_id: id.into(),
            master_seed,
            alpha,
            test_count: k,
            family_alpha: (k as f64 * alpha).min(1.0),
            pass: tests.iter().all(|t| t.pass),
            tests,
            details,
        }
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}
