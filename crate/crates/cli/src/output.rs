//! CSV tables, JSON run summaries and per-subcommand schema files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::CliError;

/// One CSV cell.
pub enum Cell {
    F(f64),
    I(i64),
    U(u64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            // shortest round-trip representation, always with '.'
            Cell::F(v) => write!(f, "{v:?}"),
            Cell::I(v) => write!(f, "{v}"),
            Cell::U(v) => write!(f, "{v}"),
            Cell::B(v) => write!(f, "{v}"),
            Cell::S(v) => write!(f, "{v}"),
        }
    }
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::output::Cell::from($x)),*] };
}

/// A table with documented columns.
pub struct Table {
    pub name: &'static str,
    pub columns: &'static [(&'static str, &'static str)],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &'static [(&'static str, &'static str)]) -> Self {
        Self {
            name,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, hash: &str) -> String {
        let mut out = format!("# config_hash: {hash}\n");
        let header: Vec<&str> = self.columns.iter().map(|c| c.0).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{cell}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    fn schema(&self) -> Value {
        json!({
            "file": format!("{}.csv", self.name),
            "preamble": "# config_hash: <sha256 of the embedded config>",
            "columns": self.columns.iter().map(|(n, d)| json!({"name": n, "description": d})).collect::<Vec<_>>(),
        })
    }
}

/// Everything a subcommand produces.
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub results: Value,
}

impl RunOutput {
    pub fn new(results: impl Serialize) -> Self {
        Self {
            tables: Vec::new(),
            results: serde_json::to_value(results).expect("results serialize"),
        }
    }

    pub fn with(mut self, table: Table) -> Self {
        self.tables.push(table);
        self
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes `<table>.csv` for every table, `<command>.json` and
/// `<command>.schema.json` into `dir`; returns the written paths.
pub fn emit(dir: &Path, command: &str, config: &ExperimentConfig, out: &RunOutput) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let hash = config.hash();
    let mut written = Vec::new();
    for t in &out.tables {
        let p = dir.join(format!("{}.csv", t.name));
        write(&p, &t.render(&hash))?;
        written.push(p);
    }
    let summary = json!({
        "command": command,
        "config_hash": hash,
        "config": serde_json::to_value(config).expect("config serializes"),
        "outputs": out.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
        "results": out.results,
    });
    let p = dir.join(format!("{command}.json"));
    write(&p, &(serde_json::to_string_pretty(&summary).unwrap() + "\n"))?;
    written.push(p);
    let schema = json!({
        "command": command,
        "tables": out.tables.iter().map(Table::schema).collect::<Vec<_>>(),
    });
    let p = dir.join(format!("{command}.schema.json"));
    write(&p, &(serde_json::to_string_pretty(&schema).unwrap() + "\n"))?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new("demo", &[("k", "index"), ("v", "value")]);
        t.push(row![1usize, 0.5]);
        t.push(row![2usize, f64::INFINITY]);
        t.push(row![3usize, 1e-20]);
        assert_eq!(t.render("ab"), "# config_hash: ab\nk,v\n1,0.5\n2,inf\n3,1e-20\n");
    }

    #[test]
    fn floats_keep_a_decimal_point() {
        assert_eq!(Cell::F(2.0).to_string(), "2.0");
        assert_eq!(Cell::F(-0.125).to_string(), "-0.125");
    }
}
