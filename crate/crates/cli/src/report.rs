//! Consolidated plain-text summary of every run found under a directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::config::PIPELINES;

/// Tables longer than this are summarised by their row count.
const MAX_ROWS: usize = 40;

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub json: Value,
}

impl RunSummary {
    fn pipeline(&self) -> &str {
        self.json["pipeline"].as_str().unwrap_or("")
    }
    fn resolution(&self) -> f64 {
        self.json["resolution"].as_f64().unwrap_or(f64::NAN)
    }
    /// Runs differing only in resolution share this key.
    fn family_key(&self) -> String {
        format!("{} {} {}", self.pipeline(), self.json["coeffs"], self.json["cube"])
    }
}

fn walk(dir: &Path, out: &mut Vec<RunSummary>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            walk(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "summary.json") {
            let text = fs::read_to_string(&p)?;
            if let Ok(json) = serde_json::from_str::<Value>(&text) {
                out.push(RunSummary { dir: dir.to_path_buf(), json });
            }
        }
    }
    Ok(())
}

pub fn collect(dir: &Path) -> std::io::Result<Vec<RunSummary>> {
    let mut out = Vec::new();
    walk(dir, &mut out)?;
    Ok(out)
}

fn md_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

fn csv_table(out: &mut String, path: &Path) {
    let Ok(mut rdr) = csv::Reader::from_path(path) else {
        let _ = writeln!(out, "(missing {})\n", path.display());
        return;
    };
    let header: Vec<String> = rdr.headers().map(|h| h.iter().map(String::from).collect()).unwrap_or_default();
    let rows: Vec<Vec<String>> = rdr.records().filter_map(|r| r.ok()).map(|r| r.iter().map(String::from).collect()).collect();
    if rows.len() > MAX_ROWS {
        let _ = writeln!(out, "({} rows, see {})\n", rows.len(), path.display());
    } else {
        md_table(out, &header, &rows);
    }
}

fn fmt_value(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map(|f| format!("{f:.6e}")).unwrap_or_else(|| n.to_string()),
        other => other.to_string(),
    }
}

fn run_section(out: &mut String, root: &Path, run: &RunSummary) {
    let rel = run.dir.strip_prefix(root).unwrap_or(&run.dir);
    let j = &run.json;
    let _ = writeln!(
        out,
        "### run `{}`: coeffs {}, resolution {}, seed {}, {}\n",
        rel.display(),
        j["coeffs"]["name"].as_str().unwrap_or("?"),
        run.resolution(),
        j["seed"],
        if j["pass"].as_bool() == Some(true) { "all checks pass" } else { "CHECKS FAILED" }
    );
    let checks: Vec<Vec<String>> = j["checks"]
        .as_array()
        .map(|a| {
            a.iter()
                .map(|c| {
                    vec![
                        c["name"].as_str().unwrap_or("").to_string(),
                        fmt_value(&c["value"]),
                        fmt_value(&c["limit"]),
                        if c["pass"].as_bool() == Some(true) { "pass".into() } else { "FAIL".into() },
                        c["anchor"].as_str().unwrap_or("").to_string(),
                    ]
                })
                .collect()
        })
        .unwrap_or_default();
    if !checks.is_empty() {
        let h: Vec<String> = ["check", "value", "limit", "verdict", "checks"].iter().map(|s| s.to_string()).collect();
        md_table(out, &h, &checks);
    }
    if let Some(tables) = j["tables"].as_array() {
        for t in tables.iter().filter_map(|t| t.as_str()) {
            let _ = writeln!(out, "{t} table:\n");
            csv_table(out, &run.dir.join(format!("{t}.csv")));
        }
    }
}

/// Metric values side by side for runs that differ only in resolution,
/// coarse to fine, with the ratio of the last two.
fn refinement_section(out: &mut String, runs: &[&RunSummary]) {
    let mut groups: BTreeMap<String, Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.family_key()).or_default().push(r);
    }
    for group in groups.values_mut() {
        group.sort_by(|a, b| b.resolution().total_cmp(&a.resolution()));
        group.dedup_by(|a, b| a.resolution() == b.resolution());
        if group.len() < 2 {
            continue;
        }
        let mut header = vec!["metric".to_string()];
        header.extend(group.iter().map(|r| format!("h = {}", r.resolution())));
        header.push("fine/coarse".into());
        let keys: Vec<String> = group[0].json["metrics"]
            .as_object()
            .map(|m| m.iter().filter(|(_, v)| v.is_number()).map(|(k, _)| k.clone()).collect())
            .unwrap_or_default();
        let rows: Vec<Vec<String>> = keys
            .iter()
            .map(|k| {
                let vals: Vec<Option<f64>> = group.iter().map(|r| r.json["metrics"][k].as_f64()).collect();
                let mut row = vec![k.clone()];
                row.extend(vals.iter().map(|v| v.map(|f| format!("{f:.6e}")).unwrap_or_default()));
                let n = vals.len();
                let ratio = match (vals[n - 2], vals[n - 1]) {
                    (Some(a), Some(b)) if a != 0.0 => format!("{:.4}", b / a),
                    _ => String::new(),
                };
                row.push(ratio);
                row
            })
            .collect();
        let _ = writeln!(out, "refinement, coeffs {}:\n", group[0].json["coeffs"]["name"].as_str().unwrap_or("?"));
        md_table(out, &header, &rows);
    }
}

/// Sections follow the fixed pipeline order; `None` when no run is found.
pub fn render(root: &Path, runs: &[RunSummary]) -> Option<String> {
    if runs.is_empty() {
        return None;
    }
    let mut out = String::from("# pmlab report\n\n");
    for p in PIPELINES {
        let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.pipeline() == p).collect();
        if mine.is_empty() {
            continue;
        }
        let _ = writeln!(out, "## {p}\n");
        for r in &mine {
            run_section(&mut out, root, r);
        }
        refinement_section(&mut out, &mine);
    }
    Some(out)
}
