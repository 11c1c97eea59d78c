//! Report payloads and their JSON/CSV files.
//!
//! JSON layout (`schema_version` 1):
//!
//! | key | content |
//! |---|---|
//! | `schema_version` | integer, bumped on incompatible changes |
//! | `tool`, `version` | producer name and crate version |
//! | `subcommand`, `seed` | what ran and with which seed |
//! | `passed` | conjunction of all verdicts |
//! | `config` | the effective configuration |
//! | `provenance` | `default`, `file` or `flag` per dotted config key |
//! | `verdicts` | `[{name, passed, detail}]` |
//! | `tables` | `[{name, columns, rows}]`, the CSV tables |
//! | `results` | array of subcommand-specific result objects |
//!
//! Payloads carry no timestamps; identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use bsdelab_core::experiments::{self, TableRow};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::config::{OutputConfig, RunConfig, Source};
use crate::error::{LabError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Header of every convergence table.
pub const CONVERGENCE_COLUMNS: [&str; 5] = ["n_or_level", "y0", "stderr", "gap", "verdict"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// A table cell. Numbers are written in shortest round-trip form, so a CSV
/// parse recovers them exactly; non-finite numbers become `null` in JSON.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv_field(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:?}"),
            Cell::Int(k) => k.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cell::Num(x) => s.serialize_f64(*x),
            Cell::Int(k) => s.serialize_u64(*k),
            Cell::Text(t) => s.serialize_str(t),
            Cell::Empty => s.serialize_none(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}
impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}
impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::Int(k as u64)
    }
}
impl From<u32> for Cell {
    fn from(k: u32) -> Self {
        Cell::Int(k as u64)
    }
}
impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
    }
}
impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}
impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// A convergence table with the frozen header.
    pub fn convergence(t: &experiments::Table) -> Self {
        let mut out = Table::new(t.name.clone(), &CONVERGENCE_COLUMNS);
        for r in &t.rows {
            out.push(vec![r.n_or_level.into(), r.y0.into(), r.stderr.into(), r.gap.into(), r.verdict.as_str().into()]);
        }
        out
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv_field))?;
        }
        w.into_inner().map_err(|e| LabError::Format(e.to_string()))
    }
}

/// Parses a convergence CSV back into rows.
pub fn read_convergence_csv(bytes: &[u8]) -> Result<Vec<TableRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CONVERGENCE_COLUMNS {
        return Err(LabError::Format(format!("unexpected convergence header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(LabError::from)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub passed: bool,
    pub config: serde_json::Value,
    pub provenance: BTreeMap<String, Source>,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<Table>,
    pub results: Vec<serde_json::Value>,
}

impl Report {
    pub fn new(rc: &RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: rc.command.id().to_string(),
            seed: rc.seed,
            passed: true,
            config: rc.echo(),
            provenance: rc.provenance.clone(),
            verdicts: Vec::new(),
            tables: Vec::new(),
            results: Vec::new(),
        }
    }

    pub fn verdict(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.passed &= passed;
        self.verdicts.push(Verdict { name: name.into(), passed, detail: detail.into() });
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }
}

fn file_stem(rc: &RunConfig, out: &OutputConfig) -> String {
    let base = out.stem.clone().unwrap_or_else(|| format!("{}-seed{}", rc.command.id(), rc.seed));
    if out.timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        format!("{base}-{secs}")
    } else {
        base
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

/// Writes the JSON report and one CSV file per table; returns the paths.
pub fn emit_report(report: &Report, rc: &RunConfig) -> Result<Vec<PathBuf>> {
    let out = &rc.output;
    fs::create_dir_all(&out.dir).map_err(|e| LabError::io(&out.dir, e))?;
    let stem = file_stem(rc, out);
    let mut written = Vec::new();
    if out.format.json() {
        let p = out.dir.join(format!("{stem}.json"));
        write(&p, &report.to_json()?)?;
        written.push(p);
    }
    if out.format.csv() {
        for t in &report.tables {
            let p = out.dir.join(format!("{stem}-{}.csv", t.name));
            write(&p, &t.to_csv()?)?;
            written.push(p);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, set, Command, Overrides};

    fn rc() -> RunConfig {
        let mut o = Overrides { seed: Some(4), ..Default::default() };
        set(&mut o.section, "theorem", "t3_levi");
        set(&mut o.section, "generator", "zero");
        set(&mut o.section, "terminal", "BT2");
        parse_config(Command::Experiment, None, o).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let src = experiments::Table {
            name: "levi".into(),
            rows: vec![
                TableRow { n_or_level: 1.0, y0: 0.1 + 0.2, stderr: 1.0 / 3.0, gap: None, verdict: "ok".into() },
                TableRow {
                    n_or_level: 2.0,
                    y0: -1e-300,
                    stderr: 5e-324,
                    gap: Some(f64::MIN_POSITIVE),
                    verdict: "ok".into(),
                },
                TableRow {
                    n_or_level: f64::INFINITY,
                    y0: 123456.789e10,
                    stderr: 0.0,
                    gap: Some(-0.0),
                    verdict: "bound".into(),
                },
            ],
        };
        let bytes = Table::convergence(&src).to_csv().unwrap();
        assert!(bytes.starts_with(b"n_or_level,y0,stderr,gap,verdict\n"));
        let back = read_convergence_csv(&bytes).unwrap();
        assert_eq!(back.len(), src.rows.len());
        for (a, b) in back.iter().zip(&src.rows) {
            assert_eq!(a.n_or_level.to_bits(), b.n_or_level.to_bits());
            assert_eq!(a.y0.to_bits(), b.y0.to_bits());
            assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
            assert_eq!(a.gap.map(f64::to_bits), b.gap.map(f64::to_bits));
            assert_eq!(a.verdict, b.verdict);
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(read_convergence_csv(b"n,y0,stderr,gap,verdict\n1,2,3,,ok\n").is_err());
    }

    #[test]
    fn empty_results_are_valid_json() {
        let r = Report::new(&rc());
        let v: serde_json::Value = serde_json::from_slice(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["results"], serde_json::json!([]));
        assert_eq!(v["passed"], true);
        assert_eq!(v["seed"], 4);
        assert_eq!(v["config"]["experiment"]["seed"], 4);
        assert_eq!(v["provenance"]["experiment.generator"], "flag");
    }

    #[test]
    fn payload_is_deterministic_and_non_finite_is_null() {
        let mut r = Report::new(&rc());
        let mut t = Table::new("t", &["x"]);
        t.push(vec![f64::NAN.into()]);
        r.tables.push(t);
        r.verdict("v", false, "d");
        assert!(!r.passed);
        let a = r.to_json().unwrap();
        assert_eq!(a, r.to_json().unwrap());
        let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
        assert!(v["tables"][0]["rows"][0][0].is_null());
    }

    #[test]
    fn emit_writes_json_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut rc = rc();
        rc.output.dir = dir.path().join("nested");
        let mut r = Report::new(&rc);
        r.tables.push(Table::new("levi", &CONVERGENCE_COLUMNS));
        let files = emit_report(&r, &rc).unwrap();
        let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, ["experiment-seed4.json", "experiment-seed4-levi.csv"]);
        rc.output.dir = PathBuf::from("/proc/forbidden/dir");
        assert!(matches!(emit_report(&r, &rc), Err(LabError::Io { .. })));
    }
}
