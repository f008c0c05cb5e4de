//! Artifacts of one pipeline run: CSV tables, two-column series and a JSON
//! summary with one entry per check.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// `source` names the module and operation behind every row.
    pub fn new(name: &str, columns: &[&str]) -> Self {
        let mut header = vec!["source".to_string()];
        header.extend(columns.iter().map(|c| c.to_string()));
        Table { name: name.into(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, source: &str, cells: Vec<String>) {
        let mut row = vec![source.to_string()];
        row.extend(cells);
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// What the check is about, in words.
    pub anchor: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, anchor: &str, value: f64, limit: f64) -> Self {
        Check { name: name.into(), anchor: anchor.into(), value, limit, pass: value <= limit }
    }

    pub fn at_least(name: &str, anchor: &str, value: f64, limit: f64) -> Self {
        Check { name: name.into(), anchor: anchor.into(), value, limit, pass: value >= limit }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
    pub metrics: Map<String, Value>,
    pub checks: Vec<Check>,
}

impl RunOutput {
    pub fn metric(&mut self, key: &str, v: impl Serialize) {
        self.metrics.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn write_csv(path: &Path, t: &Table) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(&t.header)?;
    for r in &t.rows {
        w.write_record(r)?;
    }
    w.flush()
}

fn write_series(path: &Path, pts: &[(f64, f64)]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for (a, b) in pts {
        writeln!(f, "{a} {b}")?;
    }
    f.flush()
}

/// Writes everything under `dir`; `head` leads the summary object.
pub fn write_run(dir: &Path, config_text: &str, head: Map<String, Value>, out: &RunOutput) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), config_text)?;
    for t in &out.tables {
        write_csv(&dir.join(format!("{}.csv", t.name)), t)?;
    }
    for (name, pts) in &out.series {
        write_series(&dir.join(format!("{name}.dat")), pts)?;
    }
    let mut summary = head;
    summary.insert("metrics".into(), Value::Object(out.metrics.clone()));
    summary.insert("checks".into(), serde_json::to_value(&out.checks).unwrap_or(Value::Null));
    summary.insert("pass".into(), Value::Bool(out.passed()));
    summary.insert("tables".into(), Value::Array(out.tables.iter().map(|t| Value::String(t.name.clone())).collect()));
    let text = serde_json::to_string_pretty(&Value::Object(summary)).map_err(std::io::Error::other)?;
    fs::write(dir.join("summary.json"), text + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_lf() {
        let dir = std::env::temp_dir().join(format!("pmlab-out-{}", std::process::id()));
        let mut t = Table::new("demo", &["a", "b"]);
        t.push("mod::op", vec![num(1.5), opt(None)]);
        let mut out = RunOutput { tables: vec![t], ..Default::default() };
        out.checks.push(Check::at_most("x", "demo", 1.0, 2.0));
        write_run(&dir, "seed = 1\n", Map::new(), &out).unwrap();
        let text = fs::read_to_string(dir.join("demo.csv")).unwrap();
        assert_eq!(text, "source,a,b\nmod::op,1.5,\n");
        assert_eq!(fs::read_to_string(dir.join("config.toml")).unwrap(), "seed = 1\n");
        let v: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(v["pass"], Value::Bool(true));
        fs::remove_dir_all(dir).unwrap();
    }
}
