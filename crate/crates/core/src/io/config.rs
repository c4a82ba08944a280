//! Plain-text experiment configuration: one `key = value` pair per line,
//! `#` comments, unknown keys rejected. Every pair is echoed into the JSON
//! run summary.

use crate::error::{Error, Result};
use std::path::Path;

/// Keys the commands understand. Parsing rejects anything else so typos
/// fail loudly instead of silently running defaults.
const ALLOWED_KEYS: &[&str] = &[
    // Shared
    "seed",
    "scale",
    "out_dir",
    // Degeneration simulation
    "hr",
    "kernel",
    "srf",
    "srf_c",
    "snr_hsi",
    "snr_msi",
    // Observations and references
    "x",
    "y",
    "gt_cube",
    "gt_kernel",
    "gt_srf",
    // Estimation
    "est_kernel_size",
    "kernel_ridge",
    "srf_ridge",
    "solver",
    // Schedule
    "outer_iters",
    "inner_iters",
    "lr_degeneration",
    "lr_reconstruction",
    "mode",
    "regularizer",
    // Networks
    "backbone",
    "recon",
    "backbone_width",
    "backbone_depth",
    "spatial_width",
    "spectral_width",
    "fusion_depth",
    "kernel_embed",
    "srf_embed",
    // Pre-training
    "train",
    "epochs",
    "lr",
    "task_count",
    "meta_epochs",
    "task_lr",
    "tasks_per_batch",
];

/// Parsed configuration: pairs in file order plus keyed lookup.
#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    pairs: Vec<(String, String)>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !ALLOWED_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {}: unknown key '{key}'", lineno + 1)));
            }
            if pairs.iter().any(|(k, _)| k == &key) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            pairs.push((key, value));
        }
        Ok(ExperimentConfig { pairs })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::parse(&text)
    }

    /// Override or insert a key programmatically (used for `--seed`).
    pub fn set(&mut self, key: &str, value: String) {
        if let Some(pair) = self.pairs.iter_mut().find(|(k, _)| k == key) {
            pair.1 = value;
        } else {
            self.pairs.push((key.to_string(), value));
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not an integer"))),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not an integer"))),
        }
    }

    /// Float parse accepting `inf` for the no-noise settings.
    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) if v.eq_ignore_ascii_case("inf") => Ok(f64::INFINITY),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not a number"))),
        }
    }

    /// All pairs in file order.
    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    /// Echo as a JSON object (keys sorted; values as strings).
    pub fn echo_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (k, v) in &self.pairs {
            map.insert(k.clone(), serde_json::Value::String(v.clone()));
        }
        serde_json::Value::Object(map)
    }
}
