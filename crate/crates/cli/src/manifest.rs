//! Run manifest: `manifest.json` in the output directory.
//!
//! It lists every artifact with its digest, the configuration and its hash,
//! the RNG algorithm, timings, and the work units already completed. A unit
//! is skipped on a re-run only when its input hash matches and every file it
//! produced is still on disk with the recorded digest.

use std::collections::BTreeMap;
use std::path::Path;

use kicktop::classical::CutRule;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::{sha256_hex, write_atomic};
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Identifier of the seeded generator, portable across implementations.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9, seed_from_u64)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletedPoint {
    pub key: String,
    pub input_hash: String,
    pub artifacts: Vec<String>,
    /// Scalar results reused when the unit is skipped.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutRecord {
    pub gamma: f64,
    pub lambda_cut: f64,
    pub rule: CutRule,
    pub chaotic_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub rng: String,
    pub artifacts: Vec<Artifact>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub completed: Vec<CompletedPoint>,
    pub lambda_cuts: Vec<CutRecord>,
    /// Failures that were logged and excluded from the results.
    pub exclusions: Vec<String>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            software: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config.hash(),
            config: config.clone(),
            rng: RNG_ALGORITHM.into(),
            artifacts: Vec::new(),
            timings: BTreeMap::new(),
            completed: Vec::new(),
            lambda_cuts: Vec::new(),
            exclusions: Vec::new(),
        }
    }

    /// Loads `dir/manifest.json` and adopts its artifacts and completed
    /// units under `config`. A missing or unreadable manifest starts fresh.
    pub fn resume(dir: &Path, config: &ExperimentConfig) -> Self {
        let mut m = Self::new(config);
        let path = dir.join(MANIFEST_FILE);
        let Ok(text) = std::fs::read_to_string(&path) else {
            return m;
        };
        match serde_json::from_str::<RunManifest>(&text) {
            Ok(old) => {
                m.artifacts = old.artifacts;
                m.completed = old.completed;
                m.lambda_cuts = old.lambda_cuts;
            }
            Err(e) => log::warn!("ignoring unreadable {}: {e}", path.display()),
        }
        m
    }

    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == path)
    }

    pub fn record_artifact(&mut self, path: &str, bytes: &[u8]) {
        let entry = Artifact {
            path: path.to_owned(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        };
        match self.artifacts.iter_mut().find(|a| a.path == path) {
            Some(a) => *a = entry,
            None => self.artifacts.push(entry),
        }
    }

    /// The completed unit `key` if it was built from `input_hash` and its
    /// files in `dir` are intact.
    pub fn completed(&self, dir: &Path, key: &str, input_hash: &str) -> Option<&CompletedPoint> {
        let point = self.completed.iter().find(|p| p.key == key && p.input_hash == input_hash)?;
        let intact = point.artifacts.iter().all(|rel| {
            let Some(a) = self.artifact(rel) else { return false };
            std::fs::read(dir.join(rel)).is_ok_and(|b| sha256_hex(&b) == a.sha256)
        });
        intact.then_some(point)
    }

    pub fn mark_completed(&mut self, point: CompletedPoint) {
        match self.completed.iter_mut().find(|p| p.key == point.key) {
            Some(p) => *p = point,
            None => self.completed.push(point),
        }
    }

    pub fn record_cut(&mut self, cut: CutRecord) {
        match self.lambda_cuts.iter_mut().find(|c| c.gamma == cut.gamma) {
            Some(c) => *c = cut,
            None => self.lambda_cuts.push(cut),
        }
    }

    pub fn add_timing(&mut self, stage: &str, seconds: f64) {
        *self.timings.entry(stage.to_owned()).or_default() += seconds;
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).expect("manifest is serializable");
        write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(CliError::io(&path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
