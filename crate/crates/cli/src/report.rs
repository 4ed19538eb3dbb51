//! CSV and JSON report rendering.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::{Format, Output};

/// Marker for values that do not exist for a row.
pub const NOT_AVAILABLE: &str = "n/a";

/// A rectangular report with string cells, as written to CSV.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }
}

/// One decimal, the customary precision for AP values.
pub fn fixed1(x: Option<f64>) -> String {
    x.map_or_else(|| NOT_AVAILABLE.to_string(), |v| format!("{v:.1}"))
}

pub fn fixed(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| NOT_AVAILABLE.to_string(), |v| format!("{v:.digits$}"))
}

pub fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| NOT_AVAILABLE.to_string(), |v| v.to_string())
}

pub fn render_csv(manifest: &RunManifest, table: &Table) -> anyhow::Result<String> {
    let mut out = String::new();
    for line in manifest.comment_lines() {
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str(&csv_body(table)?);
    Ok(out)
}

pub fn csv_body(table: &Table) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.headers)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().context("flushing CSV")?;
    Ok(String::from_utf8(bytes)?)
}

/// The lines of a CSV report that are not manifest comments.
pub fn strip_manifest(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[derive(Serialize)]
struct JsonReport<'a, R: Serialize> {
    manifest: &'a RunManifest,
    rows: &'a R,
}

pub fn render_json<R: Serialize>(manifest: &RunManifest, rows: &R) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(&JsonReport { manifest, rows })?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// `report.csv` -> `report.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Writes the report in the requested format. A CSV report written to a file
/// gets a full-precision JSON twin next to it.
pub fn emit<R: Serialize>(
    output: &Output,
    manifest: &RunManifest,
    table: &Table,
    rows: &R,
) -> anyhow::Result<()> {
    let text = match output.format {
        Format::Csv => render_csv(manifest, table)?,
        Format::Json => render_json(manifest, rows)?,
    };
    match &output.out {
        Some(path) => {
            write_text(path, &text)?;
            if output.format == Format::Csv {
                write_text(&sibling(path, "json"), &render_json(manifest, rows)?)?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_commas() {
        let mut t = Table::new(&["relation", "ap"]);
        t.push(vec!["spatial(car,[0,1])".into(), fixed1(Some(60.93141))]);
        t.push(vec!["const(0)".into(), fixed1(None)]);
        assert_eq!(
            csv_body(&t).unwrap(),
            "relation,ap\n\"spatial(car,[0,1])\",60.9\nconst(0),n/a\n"
        );
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("a/b.csv"), "json"), Path::new("a/b.json"));
        assert_eq!(sibling(Path::new("r"), "plot.csv"), Path::new("r.plot.csv"));
    }

    #[test]
    fn manifest_lines_are_stripped() {
        assert_eq!(strip_manifest("# x\n# y\na,b\n1,2\n"), "a,b\n1,2\n");
    }
}
