//! Self-describing JSON and CSV outputs.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::canon;
use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const SCHEMA: &str = "horolab.artifact/1";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn envelope<T: Serialize + ?Sized>(
    command: &str,
    config: &ExperimentConfig,
    result: &T,
) -> Result<Value, CliError> {
    Ok(json!({
        "schema": SCHEMA,
        "tool": "horolab",
        "version": VERSION,
        "command": command,
        "config_hash": config.hash(),
        "config": canon::to_value(config)?,
        "result": canon::to_value(result)?,
    }))
}

/// Rows of a CSV table; floats in the canonical form.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn f(v: f64) -> String {
    canon::fmt_float(v)
}

pub struct ArtifactWriter {
    pub dir: PathBuf,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    pub fn json(&self, stem: &str, value: &Value) -> Result<PathBuf, CliError> {
        self.write(&format!("{stem}.json"), &canon::render(value))
    }

    pub fn csv(&self, stem: &str, table: &Csv) -> Result<PathBuf, CliError> {
        self.write(&format!("{stem}.csv"), &table.render())
    }
}
