use std::collections::BTreeMap;
use std::path::Path;

use gme_sdp::SolverOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iters: usize,
    pub step_fraction: f64,
}

impl From<&SolverOptions> for SolverSettings {
    fn from(o: &SolverOptions) -> Self {
        Self {
            gap_tol: o.gap_tol,
            feas_tol: o.feas_tol,
            max_iters: o.max_iters,
            step_fraction: o.step_fraction,
        }
    }
}

/// Everything needed to re-run a command. Per-seed result files carry it
/// without the wall clock so that identical runs give identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub seeds: Vec<u64>,
    pub solver: SolverSettings,
    /// sha256 of every input file read, keyed by path.
    pub fixture_hashes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, solver: &SolverOptions) -> Self {
        Self {
            command: command.into(),
            parameters: BTreeMap::new(),
            seeds: Vec::new(),
            solver: solver.into(),
            fixture_hashes: BTreeMap::new(),
            wall_clock_seconds: None,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.parameters
            .insert(key.into(), serde_json::to_value(value).expect("parameter serializes"));
    }

    pub fn hash_file(&mut self, path: &Path) -> std::io::Result<()> {
        let bytes = std::fs::read(path)?;
        self.fixture_hashes
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }
}
