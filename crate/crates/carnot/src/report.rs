//! Machine- and human-readable verification reports.
//!
//! A report is an append-only list of named checks plus a provenance block.
//! The canonical JSON payload excludes runtimes so that identical runs hash
//! identically.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// One named check with its measured value and tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub pass: bool,
    /// The quantity compared against the tolerance (gap, error, fraction, …).
    pub measured: f64,
    pub tolerance: f64,
    /// Grid/step/ε settings the check ran at, as a short display string.
    pub resolution: String,
    /// Wall time, excluded from the canonical payload.
    pub runtime_ms: u128,
}

impl CheckRecord {
    pub fn new(
        name: impl Into<String>,
        measured: f64,
        tolerance: f64,
        resolution: impl Into<String>,
    ) -> Self {
        CheckRecord {
            name: name.into(),
            pass: measured <= tolerance,
            measured,
            tolerance,
            resolution: resolution.into(),
            runtime_ms: 0,
        }
    }

    /// A check whose verdict is a plain boolean rather than a comparison.
    pub fn boolean(name: impl Into<String>, pass: bool, resolution: impl Into<String>) -> Self {
        CheckRecord {
            name: name.into(),
            pass,
            measured: if pass { 0.0 } else { 1.0 },
            tolerance: 0.0,
            resolution: resolution.into(),
            runtime_ms: 0,
        }
    }
}

/// What produced the report: config digest, sampler seed, crate version.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(config_text: &str, seed: u64) -> Self {
        Provenance {
            config_hash: sha256_hex(config_text.as_bytes()),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub provenance: Provenance,
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn new(provenance: Provenance) -> Self {
        VerificationReport { provenance, checks: Vec::new() }
    }

    pub fn push(&mut self, record: CheckRecord) {
        self.checks.push(record);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Deterministic JSON payload: record order as appended, runtimes zeroed.
    pub fn canonical_json(&self) -> Result<String> {
        let mut clone = self.clone();
        for c in &mut clone.checks {
            c.runtime_ms = 0;
        }
        Ok(serde_json::to_string_pretty(&clone)?)
    }

    pub fn payload_hash(&self) -> Result<String> {
        Ok(sha256_hex(self.canonical_json()?.as_bytes()))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.canonical_json()?)?;
        Ok(())
    }

    /// Aligned text table, one row per check.
    pub fn text_table(&self) -> String {
        let name_w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let res_w = self
            .checks
            .iter()
            .map(|c| c.resolution.len())
            .max()
            .unwrap_or(10)
            .max(10);
        let mut out = format!(
            "{:<name_w$}  {:<4}  {:>12}  {:>12}  {:<res_w$}\n",
            "check", "ok", "measured", "tolerance", "resolution"
        );
        for c in &self.checks {
            out.push_str(&format!(
                "{:<name_w$}  {:<4}  {:>12.4e}  {:>12.4e}  {:<res_w$}\n",
                c.name,
                if c.pass { "yes" } else { "NO" },
                c.measured,
                c.tolerance,
                c.resolution
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> VerificationReport {
        let mut r = VerificationReport::new(Provenance::new("cfg", 7));
        r.push(CheckRecord::new("alpha", 1e-9, 1e-6, "64x64"));
        r.push(CheckRecord::boolean("beta", true, "-"));
        r
    }

    #[test]
    fn pass_logic() {
        let mut r = sample();
        assert!(r.all_pass());
        r.push(CheckRecord::new("gamma", 2.0, 1.0, "-"));
        assert!(!r.all_pass());
        assert!(!r.check("gamma").unwrap().pass);
    }

    #[test]
    fn payload_hash_ignores_runtime() {
        let mut a = sample();
        let mut b = sample();
        a.checks[0].runtime_ms = 12;
        b.checks[0].runtime_ms = 9000;
        assert_eq!(a.payload_hash().unwrap(), b.payload_hash().unwrap());
        b.checks[1].pass = false;
        assert_ne!(a.payload_hash().unwrap(), b.payload_hash().unwrap());
    }

    #[test]
    fn table_lists_every_check() {
        let r = sample();
        let t = r.text_table();
        assert!(t.contains("alpha") && t.contains("beta"));
    }
}
