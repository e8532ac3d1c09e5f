//! CSV rows plus a JSON summary next to them.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::CaseResult;
use super::summary::RunSummary;
use crate::error::{Error, Result};

/// `results.csv` → `results_summary.json`.
pub fn summary_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    csv.with_file_name(format!("{stem}_summary.json"))
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format("csv", format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the rows to `csv` and the summary beside it; returns the
/// summary path.
pub fn emit_report(results: &[CaseResult], summary: &RunSummary, csv: &Path) -> Result<PathBuf> {
    write_csv(results, csv)?;
    let json = summary_path(csv);
    write_json(summary, &json)?;
    Ok(json)
}
