//! Run reports: one row per executed check, sorted by name, written as
//! `report.json` and `report.csv`. Wall times go to `timing.json` so the
//! reports themselves are reproducible byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// 17 significant digits, enough to round-trip an f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Observed convergence order; `None` when not measured or exact.
    pub order: Option<f64>,
    pub grid: String,
    pub detail: String,
}

impl Check {
    /// Passes when `residual <= tolerance`.
    pub fn bound(name: &str, residual: f64, tolerance: f64, grid: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            residual,
            tolerance,
            pass: residual <= tolerance,
            order: None,
            grid: grid.into(),
            detail: String::new(),
        }
    }

    /// Passes when both residuals are exact zeros (at `exact_tol`) or the
    /// observed order is within `tol` of 2. `lower_only` accepts any order
    /// above `2 − tol`.
    pub fn order2(
        name: &str,
        coarse: f64,
        fine: f64,
        tol: f64,
        exact_tol: f64,
        lower_only: bool,
        grid: impl Into<String>,
    ) -> Self {
        let mut c = Self::bound(name, fine, tol, grid);
        if coarse <= exact_tol && fine <= exact_tol {
            c.pass = true;
            c.tolerance = exact_tol;
            c.detail = "exact; order n/a".into();
            return c;
        }
        let p = (coarse / fine).log2();
        c.order = Some(p);
        c.pass = if lower_only { p >= 2.0 - tol } else { (p - 2.0).abs() <= tol };
        c.detail = format!("coarse {}", fmt_f64(coarse));
        c
    }

    pub fn failed(name: &str, err: impl std::fmt::Display) -> Self {
        Self {
            name: name.into(),
            residual: f64::INFINITY,
            tolerance: 0.0,
            pass: false,
            order: None,
            grid: String::new(),
            detail: err.to_string(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub checks: Vec<Check>,
    /// Wall time in seconds per timed stage; written to `timing.json`.
    #[serde(skip)]
    pub timing: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), checks: Vec::new(), timing: BTreeMap::new() }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    /// Run `f`, record its wall time under `stage`, and return its value.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let v = f();
        self.timing.insert(stage.into(), start.elapsed().as_secs_f64());
        v
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn finish(&mut self) -> CliResult<()> {
        self.checks.sort_by(|a, b| a.name.cmp(&b.name));
        for w in self.checks.windows(2) {
            if w[0].name == w[1].name {
                return Err(CliError::Config(format!("check {} recorded twice", w[0].name)));
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        write_json(&dir.join("report.json"), self)?;
        write_json(&dir.join("timing.json"), &self.timing)?;
        let mut w = csv_writer(&dir.join("report.csv"))?;
        w.write_record(["name", "residual", "tolerance", "pass", "order", "grid", "detail"])?;
        for c in &self.checks {
            w.write_record([
                c.name.clone(),
                fmt_f64(c.residual),
                fmt_f64(c.tolerance),
                c.pass.to_string(),
                c.order.map(fmt_f64).unwrap_or_else(|| "n/a".into()),
                c.grid.clone(),
                c.detail.clone(),
            ])?;
        }
        w.flush().map_err(|e| CliError::Io("report.csv".into(), e))?;
        Ok(())
    }

    pub fn summary_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                let order = c.order.map(|p| format!(" order {p:.2}")).unwrap_or_default();
                format!(
                    "{} {}: {:.3e} (tol {:.1e}){order}{}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.residual,
                    c.tolerance,
                    if c.detail.is_empty() { String::new() } else { format!(" [{}]", c.detail) }
                )
            })
            .collect()
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.display().to_string(), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| CliError::Io(path.display().to_string(), e))
}

pub fn csv_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Write numeric rows under `header`, every value with 17 significant digits.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush().map_err(|e| CliError::Io(path.display().to_string(), e))?;
    Ok(())
}
