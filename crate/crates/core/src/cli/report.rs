//! Run reports and their on-disk tables.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::golden::GoldenReport;
use crate::checker::{ConditionReport, DependenceMask, EqualityReport, OrderCheckReport, ProbeRecord};
use crate::harness::{ComparisonReport, MarginRow, ViabilityReport};
use crate::scalar::Real;
use crate::solver::Solution;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A named property asserted by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, holds: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), holds, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub scheme: String,
    pub steps: usize,
    pub root_y: Vec<f64>,
    pub root_z: Vec<f64>,
    /// LSMC only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<Vec<f64>>,
    pub rows: usize,
}

/// One row of `solution.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRow {
    pub t: f64,
    pub state: usize,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

/// Tables written next to `report.json`; not part of the JSON itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tables {
    pub n: usize,
    pub d: usize,
    pub solution: Vec<SolutionRow>,
    pub margins: Vec<MarginRow>,
    pub probes: Vec<ProbeRecord>,
}

impl Tables {
    pub fn from_solution<T: Real>(sol: &Solution<T>) -> Self {
        let mut rows = Vec::new();
        for k in 0..=sol.grid().steps() {
            let t = sol.grid().time(k).as_f64();
            for s in 0..sol.states(k) {
                rows.push(SolutionRow {
                    t,
                    state: s,
                    y: sol.y(k, s).iter().map(|v| v.as_f64()).collect(),
                    z: sol.z(k, s).iter().map(|v| v.as_f64()).collect(),
                });
            }
        }
        Tables { n: sol.n(), d: sol.d(), solution: rows, ..Tables::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ScenarioConfig>,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<SolutionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub viability: Option<ViabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order_check: Option<OrderCheckReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub equality: Vec<EqualityReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub structure: Vec<DependenceMask>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub golden: Option<GoldenReport>,
    pub timing: Timing,
    #[serde(skip)]
    pub tables: Tables,
}

impl RunReport {
    pub fn new(command: &str, config: Option<ScenarioConfig>) -> Self {
        RunReport {
            command: command.to_string(),
            version: VERSION.to_string(),
            config,
            checks: Vec::new(),
            solution: None,
            comparison: None,
            viability: None,
            condition: None,
            order_check: None,
            equality: Vec::new(),
            structure: Vec::new(),
            golden: None,
            timing: Timing { elapsed_seconds: 0.0 },
            tables: Tables::default(),
        }
    }

    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    /// 0 when every asserted property holds, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_hold() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Fixed 17-significant-digit scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> io::Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().from_writer(fs::File::create(path)?))
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// Writes `report.json`, `margins.csv`, `solution.csv` and `checker.csv`
/// into `dir` (created if missing). Tables without data get a header only.
pub fn emit_tables(report: &RunReport, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("report.json"))?;
    f.write_all(report.to_json().as_bytes())?;
    f.write_all(b"\n")?;

    let t = &report.tables;
    let mut w = csv_writer(&dir.join("margins.csv"))?;
    w.write_record(["trial", "t", "node_or_path", "margin"]).map_err(csv_err)?;
    for r in &t.margins {
        w.write_record([r.trial.to_string(), fmt_num(r.t), r.state.to_string(), fmt_num(r.margin)]).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join("solution.csv"))?;
    let mut header = vec!["t".to_string(), "node_or_path".to_string()];
    header.extend((1..=t.n).map(|i| format!("Y{i}")));
    for i in 1..=t.n {
        header.extend((1..=t.d).map(|j| format!("Z{i}{j}")));
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in &t.solution {
        let mut rec = vec![fmt_num(r.t), r.state.to_string()];
        rec.extend(r.y.iter().chain(&r.z).map(|&v| fmt_num(v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join("checker.csv"))?;
    w.write_record(["probe_id", "t", "epsilon", "C_required"]).map_err(csv_err)?;
    for p in &t.probes {
        let eps = p.epsilon.map(fmt_num).unwrap_or_default();
        w.write_record([p.id.to_string(), fmt_num(p.t), eps, fmt_num(p.c_required)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_writes_headers() {
        let dir = tempfile::tempdir().unwrap();
        emit_tables(&RunReport::new("compare", None), dir.path()).unwrap();
        let m = fs::read_to_string(dir.path().join("margins.csv")).unwrap();
        assert_eq!(m, "trial,t,node_or_path,margin\n");
        let c = fs::read_to_string(dir.path().join("checker.csv")).unwrap();
        assert_eq!(c, "probe_id,t,epsilon,C_required\n");
        let s = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
        assert_eq!(s, "t,node_or_path\n");
        let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(r["command"], "compare");
    }

    #[test]
    fn numbers_round_trip() {
        for x in [std::f64::consts::E - 1.0, -1e-300, 0.1, 123456.789] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
    }
}
