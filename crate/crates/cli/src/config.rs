//! Per-command configuration documents.
//!
//! A command's configuration is built from its built-in defaults, then the
//! JSON file given with `--config`, then command-line flags. Unknown keys are
//! rejected at every level.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dignn::model::{LaplacianChoice, ModelConfig, TrainConfig};
use dignn::LaplacianKind;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Where a command takes its graph (and features, labels) from. At most one
/// source may be set; none means the default stochastic block model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// built-in fixture: k2, triangle, triangle-pendant, path4
    pub fixture: Option<String>,
    /// edge list; pair with `features` and, for model commands, `labels`
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// directory with edges.txt, features.csv, labels.csv, splits.json
    pub dataset: Option<PathBuf>,
    pub sbm: Option<SbmConfig>,
}

pub const INPUT_SOURCES: [&str; 4] = ["fixture", "edges", "dataset", "sbm"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmConfig {
    pub n: usize,
    pub k: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub noise: f64,
    /// defaults to the run seed
    pub seed: Option<u64>,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self { n: 200, k: 2, p_in: 0.1, p_out: 0.01, feature_dim: 16, noise: 1.0, seed: None }
    }
}

fn default_kind() -> LaplacianKind {
    LaplacianKind::RandomWalk
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub seed: u64,
    pub input: InputConfig,
    #[serde(default = "default_kind")]
    pub laplacian: LaplacianKind,
    pub mu: f64,
    /// hidden width of the random geometry used for the parameterized kind
    pub geometry_hidden: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { seed: 0, input: InputConfig::default(), laplacian: default_kind(), mu: 2.5, geometry_hidden: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub seed: u64,
    pub input: InputConfig,
    pub laplacian: LaplacianKind,
    pub mu: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// dense direct solve instead of the fixed-point iteration
    pub direct: bool,
    pub geometry_hidden: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            input: InputConfig::default(),
            laplacian: default_kind(),
            mu: 2.5,
            tol: dignn::equilibrium::DEFAULT_TOL,
            max_iter: dignn::equilibrium::DEFAULT_MAX_ITER,
            direct: false,
            geometry_hidden: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OstConfig {
    pub seed: u64,
    pub input: InputConfig,
    /// a canonical kind for the fixed-geometry check, or `parameterized`
    pub laplacian: LaplacianKind,
    pub mu: f64,
    pub tol: f64,
    /// share of nodes carrying a target
    pub constrained_fraction: f64,
    /// columns of the targets and of the two random feature matrices
    pub target_dim: usize,
    pub geometry_hidden: usize,
}

impl Default for OstConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            input: InputConfig::default(),
            laplacian: default_kind(),
            mu: 2.5,
            tol: 1e-8,
            constrained_fraction: 0.5,
            target_dim: 2,
            geometry_hidden: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OsiConfig {
    pub seed: u64,
    pub input: InputConfig,
    pub laplacian: LaplacianKind,
    /// initial signal, one value per node; defaults to the input features
    pub f0: Option<Vec<f64>>,
    pub tol: f64,
    pub max_iter: usize,
    pub trajectory_steps: usize,
}

impl Default for OsiConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            input: InputConfig::default(),
            laplacian: default_kind(),
            f0: None,
            tol: 1e-10,
            max_iter: 100_000,
            trajectory_steps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub input: InputConfig,
    pub model: ModelConfig,
    pub step: f64,
    pub threshold: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            input: InputConfig {
                sbm: Some(SbmConfig { n: 24, k: 3, p_in: 0.3, p_out: 0.05, feature_dim: 4, ..SbmConfig::default() }),
                ..InputConfig::default()
            },
            model: ModelConfig {
                hidden: 6,
                geometry_hidden: 4,
                laplacian: LaplacianChoice::Parameterized,
                mu: 3.0,
                dropout: 0.0,
                ..ModelConfig::default()
            },
            step: 1e-5,
            threshold: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub seed: u64,
    pub input: InputConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: u64,
    pub input: InputConfig,
    pub checkpoint: Option<PathBuf>,
    /// solver overrides applied to the loaded model
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub seed: u64,
    pub sbm: SbmConfig,
}

/// A single flag override: a key path into the document and its value.
pub type Override = (Vec<&'static str>, Value);

/// Overlays `top` on `base`. Objects merge key by key; anything else is
/// replaced. An `input` object naming a source drops the other sources of
/// `base`.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                if let (true, Some(o), Some(Value::Object(prev))) = (k == "input", v.as_object(), b.get_mut("input")) {
                    if INPUT_SOURCES.iter().any(|s| o.contains_key(*s)) {
                        prev.retain(|key, _| !INPUT_SOURCES.contains(&key.as_str()) || o.contains_key(key));
                    }
                }
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, top) => *slot = top,
    }
}

fn nest(path: &[&str], value: Value) -> Value {
    path.iter().rev().fold(value, |v, key| {
        let mut m = Map::new();
        m.insert(key.to_string(), v);
        Value::Object(m)
    })
}

/// Built-in defaults, overlaid with the file at `path` (if any), overlaid
/// with the flag overrides, then deserialized with unknown keys rejected.
pub fn load<T: Serialize + DeserializeOwned + Default>(path: Option<&Path>, overrides: Vec<Override>) -> Result<T> {
    let mut doc = serde_json::to_value(T::default())?;
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
        let file: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
        if !file.is_object() {
            bail!("config {} must hold a JSON object", p.display());
        }
        merge(&mut doc, file);
    }
    for (path, value) in overrides {
        merge(&mut doc, nest(&path, value));
    }
    serde_json::from_value(doc).context("invalid configuration")
}
