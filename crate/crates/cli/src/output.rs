//! Reports and file emission. Every artifact carries the config hash, seed
//! and crate version; nothing time- or host-dependent is written.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Ground metric recorded in every artifact that reports W2.
pub const GROUND_METRIC: &str = "geodesic";

/// SHA-256 hex digest of a value's compact JSON form.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let canon = serde_json::to_string(value).expect("value serializes");
    Sha256::digest(canon.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn metadata(name: &str, config_hash: &str, seed: Option<u64>) -> Value {
    json!({
        "scenario": name,
        "config_hash": config_hash,
        "seed": seed,
        "version": VERSION,
        "w2_ground_metric": GROUND_METRIC,
    })
}

/// One named pass/fail entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckLine {
    pub fn new(label: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            label: label.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Machine-readable outcome of a reproduction or check suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub passed: bool,
    pub meta: Value,
    pub checks: Vec<CheckLine>,
    pub metrics: Value,
}

impl Report {
    pub fn new(name: &str, meta: Value) -> Self {
        Self {
            name: name.to_string(),
            passed: true,
            meta,
            checks: Vec::new(),
            metrics: json!({}),
        }
    }

    pub fn check(&mut self, label: &str, passed: bool, detail: impl Into<String>) {
        self.passed &= passed;
        self.checks.push(CheckLine::new(label, passed, detail));
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics[key] = serde_json::to_value(value).expect("metric serializes");
    }

    pub fn failures(&self) -> Vec<&CheckLine> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// Short summary of the failing entries, or "ok".
    pub fn failure_summary(&self) -> String {
        let f = self.failures();
        if f.is_empty() {
            "ok".into()
        } else {
            f.iter()
                .map(|c| format!("{}: {}", c.label, c.detail))
                .collect::<Vec<_>>()
                .join("; ")
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}
