//! CSV tables and JSON run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Failure;

/// Formats a number like C's `%.16e`; NaN prints as `nan`.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        // Rust prints `1.5e-3`; C prints `1.5e-03`.
        let s = format!("{v:.16e}");
        let (mantissa, exp) = s.split_once('e').expect("exponent present");
        let exp: i32 = exp.parse().expect("integer exponent");
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    comments: Vec<String>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            comments: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Trailing `# ...` line.
    pub fn comment(&mut self, text: String) {
        self.comments.push(text);
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        let mut f = fs::File::create(path)?;
        writeln!(f, "{}", self.header.join(","))?;
        for row in &self.rows {
            writeln!(f, "{}", row.join(","))?;
        }
        for c in &self.comments {
            writeln!(f, "# {c}")?;
        }
        Ok(())
    }
}

/// Version string: the crate version plus `git describe` when available.
fn version() -> String {
    let pkg = env!("CARGO_PKG_VERSION");
    let described = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string());
    match described {
        Some(d) if !d.is_empty() => format!("{pkg}+{d}"),
        _ => pkg.to_string(),
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: String,
    config: &'a C,
    data_file: String,
    wall_seconds: f64,
    step_seconds: &'a [f64],
    checks: &'a [String],
}

/// Writes `<dir>/<command>.csv` and `<dir>/<command>.json`.
pub fn emit<C: Serialize>(
    dir: &Path,
    command: &str,
    table: &Table,
    config: &C,
    wall_seconds: f64,
    step_seconds: &[f64],
    checks: &[String],
) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{command}.csv"));
    table.write(&csv)?;
    let manifest = Manifest {
        command,
        version: version(),
        config,
        data_file: csv.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        wall_seconds,
        step_seconds,
        checks,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Io(e.to_string()))?;
    fs::write(dir.join(format!("{command}.json")), json)?;
    Ok(csv)
}
