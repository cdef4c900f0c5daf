//! JSON state files.
//!
//! ```text
//! {
//!   "dims": [2, 2, 2, 2],
//!   "kind": "pure" | "mixed",
//!   "amplitudes": [[re, im], ...],        // pure, basis order of `tensor`
//!   "matrix": [[re, im], ...],            // mixed, row-major
//!   "rational": [["p/q", "p/q"], ...]     // optional exact amplitudes
//! }
//! ```
//!
//! When `rational` is present it takes precedence over `amplitudes`, which
//! must then agree with it to 1e-12. Pure states are normalized on load.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::configurations::MarginalConfiguration;
use crate::error::{CoreError, Result};
use crate::tensor::{CMatrix, CVector, PartyLayout, QuantumState, StateRepr, C64};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Pure,
    Mixed,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StateFile {
    pub dims: Vec<usize>,
    pub kind: StateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rational: Option<Vec<[String; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn format_err(path: &str, field: &str, message: impl Into<String>) -> CoreError {
    CoreError::Format {
        path: path.to_string(),
        field: field.to_string(),
        message: message.into(),
    }
}

/// Parses `p/q` or an integer `p`.
pub fn parse_rational(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.trim().parse().ok()?;
            let q: i64 = q.trim().parse().ok()?;
            (q != 0).then(|| p as f64 / q as f64)
        }
        None => s.parse::<i64>().ok().map(|p| p as f64),
    }
}

impl StateFile {
    pub fn from_state(state: &QuantumState) -> Self {
        let pairs = |it: &mut dyn Iterator<Item = &C64>| it.map(|z| [z.re, z.im]).collect();
        match state.repr() {
            StateRepr::Pure(v) => Self {
                dims: state.layout().dims().to_vec(),
                kind: StateKind::Pure,
                amplitudes: Some(pairs(&mut v.iter())),
                matrix: None,
                rational: None,
                note: None,
            },
            StateRepr::Mixed(m) => Self {
                dims: state.layout().dims().to_vec(),
                kind: StateKind::Mixed,
                amplitudes: None,
                matrix: Some(pairs(&mut m.transpose().iter())),
                rational: None,
                note: None,
            },
        }
    }

    /// `origin` names the source in error messages.
    pub fn to_state(&self, origin: &str) -> Result<QuantumState> {
        let layout = PartyLayout::new(self.dims.clone())
            .map_err(|e| format_err(origin, "dims", e.to_string()))?;
        let d = layout.total_dim();
        match self.kind {
            StateKind::Pure => {
                let floats = self.amplitudes.as_ref().map(|a| {
                    a.iter().map(|[re, im]| C64::new(*re, *im)).collect::<Vec<_>>()
                });
                let exact = match &self.rational {
                    Some(r) => Some(
                        r.iter()
                            .enumerate()
                            .map(|(i, [re, im])| match (parse_rational(re), parse_rational(im)) {
                                (Some(a), Some(b)) => Ok(C64::new(a, b)),
                                _ => Err(format_err(
                                    origin,
                                    &format!("rational[{i}]"),
                                    format!("cannot parse [{re:?}, {im:?}]"),
                                )),
                            })
                            .collect::<Result<Vec<_>>>()?,
                    ),
                    None => None,
                };
                let amps = match (exact, floats) {
                    (Some(e), Some(f)) => {
                        if e.len() != f.len() {
                            return Err(format_err(origin, "amplitudes", "length differs from rational"));
                        }
                        if let Some(i) = (0..e.len()).find(|&i| (e[i] - f[i]).norm() > 1e-12) {
                            return Err(format_err(
                                origin,
                                &format!("amplitudes[{i}]"),
                                "disagrees with rational",
                            ));
                        }
                        e
                    }
                    (Some(e), None) => e,
                    (None, Some(f)) => f,
                    (None, None) => return Err(format_err(origin, "amplitudes", "missing")),
                };
                if amps.len() != d {
                    return Err(format_err(
                        origin,
                        "amplitudes",
                        format!("{} entries for dimension {d}", amps.len()),
                    ));
                }
                QuantumState::pure(layout, CVector::from_vec(amps))
                    .map_err(|e| format_err(origin, "amplitudes", e.to_string()))
            }
            StateKind::Mixed => {
                let m = self
                    .matrix
                    .as_ref()
                    .ok_or_else(|| format_err(origin, "matrix", "missing"))?;
                if m.len() != d * d {
                    return Err(format_err(
                        origin,
                        "matrix",
                        format!("{} entries for {d}x{d}", m.len()),
                    ));
                }
                let rho = CMatrix::from_row_iterator(d, d, m.iter().map(|[re, im]| C64::new(*re, *im)));
                QuantumState::mixed(layout, rho).map_err(|e| format_err(origin, "matrix", e.to_string()))
            }
        }
    }
}

pub fn parse_state(text: &str, origin: &str) -> Result<QuantumState> {
    let file: StateFile = serde_json::from_str(text).map_err(|e| {
        format_err(
            origin,
            "(document)",
            format!("line {}, column {}: {e}", e.line(), e.column()),
        )
    })?;
    file.to_state(origin)
}

pub fn load_state(path: &Path) -> Result<QuantumState> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
        path: origin.clone(),
        source,
    })?;
    parse_state(&text, &origin)
}

pub fn state_to_json(state: &QuantumState) -> String {
    serde_json::to_string_pretty(&StateFile::from_state(state)).expect("state serializes")
}

pub fn save_state(state: &QuantumState, path: &Path) -> Result<()> {
    std::fs::write(path, state_to_json(state)).map_err(|source| CoreError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Directory holding the shipped fixtures.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TreeLabel {
    pub n_parties: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unique: Option<bool>,
}

/// Mapping from configuration labels (`4a`, `4b`, ...) to labeled trees and
/// their fixture states.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TreeLabels {
    pub convention: String,
    pub labels: BTreeMap<String, TreeLabel>,
    #[serde(skip)]
    pub dir: PathBuf,
}

impl TreeLabels {
    pub fn load(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
            path: origin.clone(),
            source,
        })?;
        let mut labels: Self = serde_json::from_str(&text).map_err(|e| {
            format_err(&origin, "(document)", format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        labels.dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(labels)
    }

    pub fn shipped() -> Result<Self> {
        Self::load(&fixtures_dir().join("tree_labels.json"))
    }

    pub fn get(&self, label: &str) -> Result<&TreeLabel> {
        self.labels
            .get(label)
            .ok_or_else(|| CoreError::InvalidArgument(format!("unknown configuration label `{label}`")))
    }

    pub fn config(&self, label: &str) -> Result<MarginalConfiguration> {
        let l = self.get(label)?;
        MarginalConfiguration::new(l.n_parties, &l.edges)
    }

    pub fn fixture_path(&self, label: &str) -> Result<PathBuf> {
        match &self.get(label)?.fixture {
            Some(f) => Ok(self.dir.join(f)),
            None => Err(CoreError::InvalidArgument(format!("label `{label}` has no fixture state"))),
        }
    }

    pub fn fixture_state(&self, label: &str) -> Result<QuantumState> {
        load_state(&self.fixture_path(label)?)
    }
}
