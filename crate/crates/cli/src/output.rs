//! CSV tables and the JSON run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gibbslab::engines::RunManifest;

use crate::config::{ExperimentConfig, Format};
use crate::Failure;

#[derive(Clone, Debug)]
pub enum Cell {
    F(f64),
    I(i64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::I(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::I(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

/// Seventeen significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f64(*v),
            Cell::I(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::output::Cell::from($x)),*] };
}

pub struct Table {
    pub name: String,
    /// `key=value` pairs for the metadata line.
    pub meta: Vec<(String, String)>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Self { name: name.into(), meta: Vec::new(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width for {}", self.name);
        self.rows.push(row);
    }
}

/// Everything a subcommand produces.
#[derive(Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
    pub budgets: serde_json::Value,
    /// Contract violations; any entry turns the exit status into 4.
    pub violations: Vec<String>,
}

impl Report {
    pub fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(what());
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn write_table(dir: &Path, t: &Table, subcommand: &str, seed: u64) -> Result<PathBuf, Failure> {
    let path = dir.join(format!("{}.csv", t.name));
    let mut file = fs::File::create(&path).map_err(|e| io(&path, e))?;
    let mut meta = format!("# tool=gibbslab version={} subcommand={subcommand} seed={seed}", env!("CARGO_PKG_VERSION"));
    for (k, v) in &t.meta {
        meta.push_str(&format!(" {k}={v}"));
    }
    writeln!(file, "{meta}").map_err(|e| io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let err = |e: csv::Error| Failure::Io(format!("{}: {e}", path.display()));
    w.write_record(&t.header).map_err(err)?;
    for r in &t.rows {
        w.write_record(r.iter().map(Cell::render)).map_err(err)?;
    }
    w.flush().map_err(|e| io(&path, e))?;
    Ok(path)
}

pub fn manifest_for(cfg: &ExperimentConfig, subcommand: &str, seed: u64) -> RunManifest {
    let mut m = RunManifest::new(subcommand, seed);
    let mut engine = cfg.engine.clone();
    engine.seed = seed;
    m.model = serde_json::to_value(cfg.model).expect("model serializes");
    m.engine = serde_json::to_value(&engine).expect("engine serializes");
    m.scenario = serde_json::to_value(&cfg.scenario).expect("scenario serializes");
    m
}

/// Writes the tables and the manifest; returns the manifest.
pub fn emit(
    cfg: &ExperimentConfig,
    subcommand: &str,
    seed: u64,
    dir: &Path,
    report: &Report,
    wall_clock: f64,
) -> Result<RunManifest, Failure> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut m = manifest_for(cfg, subcommand, seed);
    m.budgets = report.budgets.clone();
    m.notes = report.notes.clone();
    m.notes.extend(report.violations.iter().map(|v| format!("contract violation: {v}")));
    if cfg.output.formats.contains(&Format::Csv) {
        for t in &report.tables {
            write_table(dir, t, subcommand, seed)?;
            m.outputs.push(format!("{}.csv", t.name));
        }
    }
    m.runtime.wall_clock_seconds = wall_clock;
    m.runtime.threads = gibbslab::par::threads();
    if cfg.output.formats.contains(&Format::Json) {
        let path = dir.join("manifest.json");
        fs::write(&path, m.to_json()).map_err(|e| io(&path, e))?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }
}
