//! CSV tables and JSON run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::presets_version;

/// Full double precision; `NaN` where a column has no value.
pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

/// Writes `header` and one row per index of the (equal-length) columns.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> std::io::Result<()> {
    let rows = columns.first().map_or(0, |c| c.len());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..rows {
        w.write_record(columns.iter().map(|c| format_value(c[i])))?;
    }
    w.flush()
}

/// Writes string rows as they are.
pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub presets_version: i64,
    pub command: String,
    pub preset: Option<String>,
    /// Everything needed to rerun: the resolved config, and for
    /// `simulate`/`compare` the full model parameters.
    pub config: serde_json::Value,
    pub model: Option<serde_json::Value>,
    pub effective_model: Option<String>,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    pub diagnostics: serde_json::Value,
    /// `ok`, or the contract violations that made the run exit nonzero.
    pub status: String,
}

impl RunManifest {
    pub fn new(command: &str, preset: Option<String>, config: serde_json::Value) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            presets_version: presets_version(),
            command: command.into(),
            preset,
            config,
            model: None,
            effective_model: None,
            wall_time_seconds: 0.0,
            outputs: Vec::new(),
            diagnostics: serde_json::Value::Null,
            status: "ok".into(),
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        write_text(path, &(text + "\n"))
    }
}

/// `<dir>/<stem><suffix>`
pub fn output_path(dir: &Path, stem: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{stem}{suffix}"))
}
