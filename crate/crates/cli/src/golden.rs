//! Named constants pinned by a previous run, keyed by config hash.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canon;
use crate::error::CliError;

pub const SCHEMA: &str = "horolab.goldens/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenEntry {
    pub value: f64,
    #[serde(default)]
    pub abs_tol: f64,
    #[serde(default)]
    pub rel_tol: f64,
    pub config_hash: String,
}

impl GoldenEntry {
    pub fn accepts(&self, v: f64) -> bool {
        (v - self.value).abs() <= self.abs_tol + self.rel_tol * self.value.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenRegistry {
    pub schema: String,
    pub entries: BTreeMap<String, GoldenEntry>,
}

impl Default for GoldenRegistry {
    fn default() -> Self {
        Self { schema: SCHEMA.into(), entries: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum GoldenStatus {
    Match {
        registered: f64,
    },
    Mismatch {
        registered: f64,
    },
    /// Registered under another config hash.
    Stale {
        registered: f64,
        config_hash: String,
    },
    Missing,
}

impl GoldenStatus {
    pub fn is_match(&self) -> bool {
        matches!(self, GoldenStatus::Match { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoldenCheck {
    pub name: String,
    pub value: f64,
    #[serde(flatten)]
    pub status: GoldenStatus,
}

impl GoldenRegistry {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let reg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if reg.schema != SCHEMA {
            return Err(CliError::Config(format!("unsupported golden schema {:?}", reg.schema)));
        }
        Ok(reg)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, canon::to_canonical(self)?)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
    }

    pub fn check(&self, name: &str, value: f64, config_hash: &str) -> GoldenCheck {
        let status = match self.entries.get(name) {
            None => GoldenStatus::Missing,
            Some(e) if e.config_hash != config_hash => {
                GoldenStatus::Stale { registered: e.value, config_hash: e.config_hash.clone() }
            }
            Some(e) if e.accepts(value) => GoldenStatus::Match { registered: e.value },
            Some(e) => GoldenStatus::Mismatch { registered: e.value },
        };
        GoldenCheck { name: name.to_string(), value, status }
    }

    pub fn record(&mut self, name: &str, value: f64, abs_tol: f64, rel_tol: f64, config_hash: &str) {
        self.entries
            .insert(name.to_string(), GoldenEntry { value, abs_tol, rel_tol, config_hash: config_hash.to_string() });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statuses() {
        let mut r = GoldenRegistry::default();
        r.record("k", 1.0, 0.0, 0.05, "h");
        assert!(r.check("k", 1.04, "h").status.is_match());
        assert!(matches!(r.check("k", 1.06, "h").status, GoldenStatus::Mismatch { .. }));
        assert!(matches!(r.check("k", 1.0, "other").status, GoldenStatus::Stale { .. }));
        assert!(matches!(r.check("q", 1.0, "h").status, GoldenStatus::Missing));
    }
}
