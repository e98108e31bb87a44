//! Scripted experiments. Each run returns an [`ExperimentReport`] holding
//! the effective configuration, named metrics, tables and verdicts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{io, ScalarField};
use crate::error::{Error, Result};

mod barenblatt;
mod dirac;
mod giant;
mod invariants;
mod ladder;
mod slanted;

pub use barenblatt::{run_barenblatt_convergence, BarenblattConfig};
pub use dirac::{run_dirac_trace, DiracConfig};
pub use giant::{run_giant, GiantConfig};
pub use invariants::{
    check_comparison, check_mass_conservation, check_scaling, run_invariants, InvariantConfig, OrderedPair,
};
pub use ladder::{run_minorant, run_propagation, MinorantConfig, PropagationConfig};
pub use slanted::{run_slanted, SlantedConfig};

/// Default truncation ladder `10^1 .. 10^6`.
pub fn default_ladder() -> Vec<f64> {
    (1..=6).map(|e| 10f64.powi(e)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub passed: bool,
    /// Metric names this verdict is decided on.
    pub metrics: Vec<String>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| io::format_num(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    /// Effective configuration; feeding it back reproduces the run.
    pub config: serde_json::Value,
    pub metrics: BTreeMap<String, f64>,
    pub tables: BTreeMap<String, Table>,
    pub verdicts: Vec<Verdict>,
    pub artifacts: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(name: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            name: name.to_string(),
            config: serde_json::to_value(config)?,
            ..Default::default()
        })
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn verdict(&mut self, criterion: &str, passed: bool, metrics: &[&str], detail: impl Into<String>) {
        self.verdicts.push(Verdict {
            criterion: criterion.to_string(),
            passed,
            metrics: metrics.iter().map(|m| m.to_string()).collect(),
            detail: detail.into(),
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// Every verdict must name at least one metric, and each one must exist.
    pub fn validate(&self) -> Result<()> {
        for v in &self.verdicts {
            if v.metrics.is_empty() {
                return Err(Error::Config(format!("verdict '{}' names no metric", v.criterion)));
            }
            for m in &v.metrics {
                if !self.metrics.contains_key(m) {
                    return Err(Error::Config(format!(
                        "verdict '{}' refers to missing metric '{m}'",
                        v.criterion
                    )));
                }
            }
        }
        Ok(())
    }

    /// One `PASS`/`FAIL` line per verdict.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            let tag = if v.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("[{tag}] {}/{}: {}\n", self.name, v.criterion, v.detail));
        }
        out
    }

    /// Writes every table as CSV into `dir` and records the paths.
    pub fn write_tables(&mut self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, table) in &self.tables {
            let path = dir.join(format!("{name}.csv"));
            fs::write(&path, table.to_csv())?;
            self.artifacts.push(path);
        }
        Ok(())
    }

    /// Writes `report.json` (after the tables, so their paths are listed).
    pub fn write_json(&mut self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("report.json");
        self.artifacts.push(path.clone());
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text)?;
        Ok(path)
    }
}

/// Optional artifact directory handed to experiments for field snapshots.
#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    dir: Option<PathBuf>,
}

impl Artifacts {
    pub fn none() -> Self {
        Self { dir: None }
    }

    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()) }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Writes `name.csv` and `name.json` for a field when a directory is set.
    pub fn field(&self, report: &mut ExperimentReport, name: &str, time: Option<f64>, field: &ScalarField) -> Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{name}.csv"));
        io::write_csv(fs::File::create(&csv)?, &[(name, field)])?;
        let json = dir.join(format!("{name}.json"));
        io::write_json(fs::File::create(&json)?, name, time, field)?;
        report.artifacts.push(csv);
        report.artifacts.push(json);
        Ok(())
    }
}

/// Metric key with a ladder or resolution suffix, e.g. `m[k=1e3]`.
pub(crate) fn keyed(base: &str, key: &str, value: f64) -> String {
    format!("{base}[{key}={value:e}]")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_must_reference_metrics() {
        let mut r = ExperimentReport::new("demo", &serde_json::json!({"p": 3})).unwrap();
        r.metric("err", 0.1);
        r.verdict("small", true, &["err"], "ok");
        assert!(r.validate().is_ok());
        r.verdict("ghost", true, &["missing"], "");
        assert!(r.validate().is_err());
        let mut bare = ExperimentReport::default();
        bare.verdict("none", true, &[], "");
        assert!(bare.validate().is_err());
    }

    #[test]
    fn table_csv_layout() {
        let mut t = Table::new(&["h", "err"]);
        t.push(vec![0.5, 1e-3]);
        assert_eq!(t.to_csv(), "h,err\n0.5,0.001\n");
        assert_eq!(t.column("err").unwrap(), vec![1e-3]);
    }

    #[test]
    fn summary_lines() {
        let mut r = ExperimentReport::new("x", &()).unwrap();
        r.metric("a", 1.0);
        r.verdict("c1", false, &["a"], "too big");
        assert_eq!(r.summary(), "[FAIL] x/c1: too big\n");
        assert!(!r.passed());
    }

    #[test]
    fn default_ladder_spans_six_decades() {
        assert_eq!(default_ladder(), vec![1e1, 1e2, 1e3, 1e4, 1e5, 1e6]);
        assert_eq!(keyed("m", "k", 1000.0), "m[k=1e3]");
    }
}
