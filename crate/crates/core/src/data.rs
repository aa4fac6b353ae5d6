//! Datasets: file loading, stochastic block models and stratified splits.
//!
//! On disk a dataset is a directory with `edges.txt` (edge list), headerless
//! `features.csv` and `labels.csv`, and `splits.json` holding
//! `{"train": [...], "val": [...], "test": [...]}` node indices.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{read_edge_list, Graph};
use crate::linalg::Matrix;

pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.6, 0.2, 0.2);
pub const DEFAULT_SPLIT_SEED: u64 = 0;
pub const SBM_MAX_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Labels and masks for one prediction target (nodes, or whole graphs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub labels: Vec<usize>,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl Targets {
    pub fn mask(&self, split: Split) -> &[bool] {
        match split {
            Split::Train => &self.train_mask,
            Split::Val => &self.val_mask,
            Split::Test => &self.test_mask,
        }
    }
}

/// Graph-level task over a block-diagonal batch: node `i` belongs to graph
/// `membership[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTask {
    pub membership: Vec<usize>,
    pub num_graphs: usize,
    pub targets: Targets,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: Matrix,
    pub nodes: Targets,
    pub num_classes: usize,
    pub graph_task: Option<GraphTask>,
}

impl Dataset {
    /// Node-level dataset with empty masks.
    pub fn new(graph: Graph, features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let n = graph.num_nodes();
        if features.nrows() != n {
            return Err(Error::InconsistentDimensions(format!(
                "{} feature rows for {n} nodes",
                features.nrows()
            )));
        }
        if labels.len() != n {
            return Err(Error::InconsistentDimensions(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InconsistentDimensions(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            graph,
            features,
            nodes: Targets {
                labels,
                train_mask: vec![false; n],
                val_mask: vec![false; n],
                test_mask: vec![false; n],
            },
            num_classes,
            graph_task: None,
        })
    }

    /// The target the model is trained on: graphs when a graph task is set.
    pub fn targets(&self) -> &Targets {
        self.graph_task.as_ref().map_or(&self.nodes, |t| &t.targets)
    }

    pub fn labels(&self) -> &[usize] {
        &self.targets().labels
    }

    pub fn mask(&self, split: Split) -> &[bool] {
        self.targets().mask(split)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitFile {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

pub fn read_features(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_error(path, k + 1, e.to_string()))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_error(
                    path,
                    k + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, |r| r.len());
    Ok(Matrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(
            line.parse::<usize>()
                .map_err(|e| parse_error(path, k + 1, e.to_string()))?,
        );
    }
    Ok(labels)
}

fn masks_from_indices(n: usize, idx: &[usize], name: &str) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &i in idx {
        if i >= n {
            return Err(Error::InconsistentDimensions(format!(
                "{name} split index {i} out of range for {n} nodes"
            )));
        }
        mask[i] = true;
    }
    Ok(mask)
}

/// Loads a node-classification dataset. Without a split file (absent path or
/// missing file) a stratified 60/20/20 split with seed 0 is generated.
pub fn load_dataset(
    edge_path: &Path,
    feature_path: &Path,
    label_path: &Path,
    split_path: Option<&Path>,
) -> Result<Dataset> {
    let features = read_features(feature_path)?;
    let labels = read_labels(label_path)?;
    let n = features.nrows();
    let inferred = read_edge_list(edge_path, None)?;
    if inferred.num_nodes() > n {
        return Err(Error::InconsistentDimensions(format!(
            "edge list references node {} but only {n} feature rows exist",
            inferred.num_nodes() - 1
        )));
    }
    let graph = read_edge_list(edge_path, Some(n))?;
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let ds = Dataset::new(graph, features, labels, num_classes)?;
    match split_path.filter(|p| p.exists()) {
        Some(p) => {
            let s: SplitFile = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            let mut ds = ds;
            ds.nodes.train_mask = masks_from_indices(n, &s.train, "train")?;
            ds.nodes.val_mask = masks_from_indices(n, &s.val, "val")?;
            ds.nodes.test_mask = masks_from_indices(n, &s.test, "test")?;
            check_disjoint(&ds.nodes)?;
            Ok(ds)
        }
        None => split(&ds, DEFAULT_FRACTIONS, DEFAULT_SPLIT_SEED),
    }
}

/// Loads `edges.txt`, `features.csv`, `labels.csv` and `splits.json` from `dir`.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    load_dataset(
        &dir.join("edges.txt"),
        &dir.join("features.csv"),
        &dir.join("labels.csv"),
        Some(&dir.join("splits.json")),
    )
}

fn check_disjoint(t: &Targets) -> Result<()> {
    for i in 0..t.labels.len() {
        let k = t.train_mask[i] as u8 + t.val_mask[i] as u8 + t.test_mask[i] as u8;
        if k > 1 {
            return Err(Error::InconsistentDimensions(format!(
                "node {i} appears in more than one split"
            )));
        }
    }
    Ok(())
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("edges.txt"), ds.graph.to_edge_list())?;
    std::fs::write(dir.join("features.csv"), crate::linalg::matrix_to_csv(&ds.features))?;
    let labels: String = ds.nodes.labels.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(dir.join("labels.csv"), labels)?;
    let idx = |m: &[bool]| (0..m.len()).filter(|&i| m[i]).collect::<Vec<_>>();
    let s = SplitFile {
        train: idx(&ds.nodes.train_mask),
        val: idx(&ds.nodes.val_mask),
        test: idx(&ds.nodes.test_mask),
    };
    std::fs::write(dir.join("splits.json"), serde_json::to_string(&s)? + "\n")?;
    Ok(())
}

/// Stochastic block model with balanced classes (`label = i mod k`), class
/// means drawn from a standard normal and features `mean + noise * N(0, I)`.
/// Regenerates until connected. The result carries the default split.
pub fn synth_sbm(
    n: usize,
    k: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    feature_noise: f64,
    seed: u64,
) -> Result<Dataset> {
    let unit = 0.0..=1.0;
    if !unit.contains(&p_in) || !unit.contains(&p_out) {
        return Err(Error::InvalidArgument(format!(
            "edge probabilities must lie in [0, 1], got {p_in} and {p_out}"
        )));
    }
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!("cannot place {n} nodes in {k} classes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut graph = None;
    for _ in 0..SBM_MAX_RETRIES {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if labels[i] == labels[j] { p_in } else { p_out };
                if rng.random_bool(p) {
                    pairs.push((i, j));
                }
            }
        }
        let g = Graph::from_pairs(n, &pairs)?;
        if g.is_connected() {
            graph = Some(g);
            break;
        }
    }
    let graph = graph.ok_or(Error::DisconnectedAfterRetries(SBM_MAX_RETRIES))?;
    let means = Matrix::from_fn(k, feature_dim, |_, _| rng.sample(StandardNormal));
    let features = Matrix::from_fn(n, feature_dim, |i, c| {
        let z: f64 = rng.sample(StandardNormal);
        means[(labels[i], c)] + feature_noise * z
    });
    let ds = Dataset::new(graph, features, labels, k)?;
    split(&ds, DEFAULT_FRACTIONS, DEFAULT_SPLIT_SEED ^ seed)
}

/// Stratified random split of the node targets (or the graph targets when a
/// graph task is present). Per class the split sizes are rounded fractions,
/// with test taking whatever remains when the fractions sum to one.
pub fn split(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let (ftr, fva, fte) = fractions;
    if [ftr, fva, fte].iter().any(|f| !(0.0..=1.0).contains(f)) || ftr + fva + fte > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fractions:?} must be in [0, 1] and sum to at most 1"
        )));
    }
    let num_splits = [ftr, fva, fte].iter().filter(|&&f| f > 0.0).count();
    let exhaustive = (ftr + fva + fte - 1.0).abs() < 1e-12;
    let t = ds.targets();
    let n = t.labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Targets {
        labels: t.labels.clone(),
        train_mask: vec![false; n],
        val_mask: vec![false; n],
        test_mask: vec![false; n],
    };
    for class in 0..ds.num_classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| t.labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < num_splits {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
                splits: num_splits,
            });
        }
        members.shuffle(&mut rng);
        let m = members.len() as f64;
        let n_tr = (ftr * m).round() as usize;
        let n_va = ((fva * m).round() as usize).min(members.len() - n_tr);
        let rest = members.len() - n_tr - n_va;
        let n_te = if exhaustive { rest } else { ((fte * m).round() as usize).min(rest) };
        for (r, &i) in members.iter().enumerate() {
            if r < n_tr {
                out.train_mask[i] = true;
            } else if r < n_tr + n_va {
                out.val_mask[i] = true;
            } else if r < n_tr + n_va + n_te {
                out.test_mask[i] = true;
            }
        }
    }
    let mut ds = ds.clone();
    match ds.graph_task.as_mut() {
        Some(task) => task.targets = out,
        None => ds.nodes = out,
    }
    Ok(ds)
}

/// Fraction of edges joining equally labelled nodes.
pub fn homophily(g: &Graph, labels: &[usize]) -> f64 {
    let edges = g.edges();
    if edges.is_empty() {
        return 0.0;
    }
    let same = edges.iter().filter(|&&(i, j, _)| labels[i] == labels[j]).count();
    same as f64 / edges.len() as f64
}
