//! Run artifacts: data tables, manifests, and the aggregate report.
//!
//! Every run writes three files into `<output.dir>/<experiment>/`:
//!
//! * `config.toml` - the effective config, canonically serialized;
//! * `<experiment>.json` or `.csv` - the data table (plus a summary
//!   object in the JSON form);
//! * `manifest.json` - schema, config hash, module versions, and the
//!   pass/fail table of every check the run performed.
//!
//! All numbers are written in shortest round-trip decimal form and field
//! order is fixed, so re-running an identical config reproduces every
//! artifact byte for byte. `report` walks a directory tree, collects the
//! manifests, and renders the combined pass/fail matrix.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::CliError;

/// One verified quantity: `value` compared to `bound` under `relation`
/// (`<=`, `>=`, or `info` for reported-only numbers).
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct CheckRow {
    pub check: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    pub relation: String,
    pub pass: bool,
}

impl CheckRow {
    pub fn le(check: &str, value: f64, bound: f64) -> Self {
        CheckRow {
            check: check.into(),
            value,
            bound: Some(bound),
            relation: "<=".into(),
            pass: value <= bound,
        }
    }

    pub fn ge(check: &str, value: f64, bound: f64) -> Self {
        CheckRow {
            check: check.into(),
            value,
            bound: Some(bound),
            relation: ">=".into(),
            pass: value >= bound,
        }
    }

    pub fn info(check: &str, value: f64) -> Self {
        CheckRow { check: check.into(), value, bound: None, relation: "info".into(), pass: true }
    }
}

/// Column-ordered data table; the payload of one run.
#[derive(Clone, Debug)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width matches header");
        self.rows.push(row);
    }

    fn to_json_rows(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                for (name, value) in self.columns.iter().zip(row) {
                    obj.insert((*name).to_string(), value.clone());
                }
                Value::Object(obj)
            })
            .collect()
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(csv_cell).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn csv_cell(v: &Value) -> String {
    let raw = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Null => String::new(),
        other => other.to_string(),
    };
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw
    }
}

/// Everything a runner produces besides its exit status.
pub struct Outcome {
    pub table: Table,
    pub summary: Value,
    pub checks: Vec<CheckRow>,
}

impl Outcome {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Serialize, Deserialize, Debug)]
pub struct Manifest {
    pub schema: u32,
    pub experiment: String,
    pub config_sha256: String,
    pub versions: Versions,
    pub checks: Vec<CheckRow>,
    pub artifacts: Vec<String>,
}

#[derive(Serialize, Deserialize, Debug)]
pub struct Versions {
    pub quasilap: String,
    #[serde(rename = "quasilap-cli")]
    pub cli: String,
}

/// Writes `config.toml`, the data artifact, and `manifest.json`; returns
/// the rendered stdout payload (the data artifact's content).
pub fn write_run(cfg: &ExperimentConfig, outcome: &Outcome) -> Result<String, CliError> {
    let dir = PathBuf::from(&cfg.output.dir).join(&cfg.experiment);
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Run(format!("cannot create {}: {e}", dir.display())))?;

    let config_name = "config.toml";
    fs::write(dir.join(config_name), cfg.canonical_toml())
        .map_err(|e| CliError::Run(format!("write config: {e}")))?;

    let data_name = format!("{}.{}", cfg.experiment, cfg.output.format);
    let payload = match cfg.output.format.as_str() {
        "csv" => outcome.table.to_csv(),
        _ => {
            let doc = json!({
                "schema": crate::config::CONFIG_SCHEMA,
                "experiment": cfg.experiment,
                "summary": outcome.summary,
                "rows": outcome.table.to_json_rows(),
            });
            let mut text = serde_json::to_string_pretty(&doc).expect("json serializes");
            text.push('\n');
            text
        }
    };
    fs::write(dir.join(&data_name), &payload)
        .map_err(|e| CliError::Run(format!("write data: {e}")))?;

    let manifest = Manifest {
        schema: crate::config::CONFIG_SCHEMA,
        experiment: cfg.experiment.clone(),
        config_sha256: cfg.sha256_hex(),
        versions: Versions {
            quasilap: quasilap::VERSION.to_string(),
            cli: env!("CARGO_PKG_VERSION").to_string(),
        },
        checks: outcome.checks.clone(),
        artifacts: vec![config_name.to_string(), data_name],
    };
    let mut manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_text.push('\n');
    fs::write(dir.join("manifest.json"), manifest_text)
        .map_err(|e| CliError::Run(format!("write manifest: {e}")))?;

    Ok(payload)
}

/// Collects every `manifest.json` under `dir` (recursively, in sorted
/// path order) and renders the pass/fail matrix. Returns the rendered
/// table and whether all checks passed.
pub fn report(dir: &Path) -> Result<(String, bool), CliError> {
    let mut paths = Vec::new();
    collect_manifests(dir, &mut paths)
        .map_err(|e| CliError::Config(format!("cannot scan {}: {e}", dir.display())))?;
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "no manifest.json found under {}",
            dir.display()
        )));
    }

    let mut rows: Vec<(String, CheckRow)> = Vec::new();
    for path in &paths {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for check in manifest.checks {
            rows.push((manifest.experiment.clone(), check));
        }
    }

    let headers = ["experiment", "check", "value", "rel", "bound", "status"];
    let mut cells: Vec<[String; 6]> = Vec::with_capacity(rows.len());
    for (experiment, check) in &rows {
        cells.push([
            experiment.clone(),
            check.check.clone(),
            format!("{:.6e}", check.value),
            check.relation.clone(),
            check.bound.map_or_else(|| "-".into(), |b| format!("{b:.3e}")),
            if check.pass { "PASS".into() } else { "FAIL".into() },
        ]);
    }
    let mut widths = headers.map(str::len);
    for row in &cells {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }

    let mut out = String::new();
    let fmt_row = |cols: &[String; 6], widths: &[usize; 6]| -> String {
        cols.iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let header_row: [String; 6] = headers.map(String::from);
    out.push_str(&fmt_row(&header_row, &widths));
    out.push('\n');
    for row in &cells {
        out.push_str(&fmt_row(row, &widths));
        out.push('\n');
    }
    let passed = rows.iter().filter(|(_, c)| c.pass).count();
    let all_pass = passed == rows.len();
    out.push_str(&format!(
        "{} checks from {} runs: {} passed, {} failed\n",
        rows.len(),
        paths.len(),
        passed,
        rows.len() - passed
    ));
    Ok((out, all_pass))
}

fn collect_manifests(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> =
        fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_manifests(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "manifest.json") {
            out.push(path);
        }
    }
    Ok(())
}
