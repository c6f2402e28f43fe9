//! Run artifacts: pass/fail summaries (JSON) and numeric series (CSV).
//!
//! Every command writes the same `Summary` shape so downstream tooling can
//! diff runs without knowing which experiment produced them. CSV cells carry
//! 17 significant digits so a written series parses back bit-exact.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decomposition::SplitSeries;
use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};

/// One verdict with the number that produced it. The direction of the
/// comparison (at most / at least) is part of the check's contract, not the
/// record; `pass` is authoritative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: value = {:.6e}, threshold = {:.6e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub config_hash: String,
    pub checks: Vec<CheckLine>,
    pub metrics: BTreeMap<String, f64>,
}

impl Summary {
    pub fn new(command: impl Into<String>, config_hash: impl Into<String>) -> Self {
        Summary {
            command: command.into(),
            config_hash: config_hash.into(),
            checks: Vec::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn push_check(&mut self, name: impl Into<String>, pass: bool, value: f64, threshold: f64) {
        self.checks.push(CheckLine { name: name.into(), pass, value, threshold });
    }

    pub fn set_metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    /// Human-readable block: one line per check, then the metrics.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!("{c}\n"));
        }
        for (k, v) in &self.metrics {
            out.push_str(&format!("{k} = {v:.6e}\n"));
        }
        out
    }
}

/// A cell with enough digits to survive a write/parse round trip exactly.
fn cell(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a column-oriented table: `columns[j]` is the j-th column, all equal
/// length. Rows come out as `columns[0][i], columns[1][i], ...`.
pub fn write_csv(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    if header.len() != columns.len() {
        return Err(Error::Inconsistency(format!(
            "csv header has {} names for {} columns",
            header.len(),
            columns.len()
        )));
    }
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Inconsistency("csv columns have unequal lengths".into()));
    }
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{}", header.join(","))?;
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| cell(c[i])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Standard trajectory table. `residual` is the pointwise energy-balance
/// defect where one was computed; pass NaN for rows without one (endpoints
/// of a centered difference, for instance).
pub fn write_trajectory_csv(
    path: &Path,
    record: &TrajectoryRecord,
    residual: Option<&[f64]>,
) -> Result<()> {
    let nan_fill;
    let res: &[f64] = match residual {
        Some(r) => r,
        None => {
            nan_fill = vec![f64::NAN; record.len()];
            &nan_fill
        }
    };
    write_csv(
        path,
        &["t", "E", "Gamma", "work", "norm_u_triple1", "norm_eta_M", "residual"],
        &[
            &record.times,
            &record.energies,
            &record.gammas,
            &record.forcing_work,
            &record.norm_u_triple1,
            &record.norm_eta_m,
            res,
        ],
    )
}

pub fn write_split_series_csv(path: &Path, series: &SplitSeries) -> Result<()> {
    write_csv(
        path,
        &["t", "E_linear", "E_forced_H1", "residual_split", "Theta_nu", "Upsilon_nu"],
        &[
            &series.times,
            &series.e_linear,
            &series.e_forced_h1,
            &series.residual_split,
            &series.theta_nu,
            &series.upsilon_nu,
        ],
    )
}
