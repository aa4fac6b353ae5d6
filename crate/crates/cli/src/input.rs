//! Resolving an [`InputConfig`] into a graph, features or a full dataset.

use anyhow::{bail, Context, Result};
use dignn::data::{load_dataset, load_dataset_dir, read_features, synth_sbm, Dataset};
use dignn::graph::read_edge_list;
use dignn::{Graph, Matrix};

use crate::config::{InputConfig, SbmConfig};

fn check_single_source(input: &InputConfig) -> Result<()> {
    let set = [
        input.fixture.is_some(),
        input.edges.is_some(),
        input.dataset.is_some(),
        input.sbm.is_some(),
    ];
    if set.iter().filter(|&&s| s).count() > 1 {
        bail!("input: set only one of fixture, edges, dataset, sbm");
    }
    Ok(())
}

/// Small named graphs. Features are the indicator of node 0.
pub fn fixture(name: &str) -> Result<(Graph, Matrix)> {
    let (n, pairs): (usize, Vec<(usize, usize)>) = match name {
        "k2" => (2, vec![(0, 1)]),
        "triangle" => (3, vec![(0, 1), (1, 2), (0, 2)]),
        "triangle-pendant" => (4, vec![(0, 1), (1, 2), (0, 2), (0, 3)]),
        "path4" => (4, vec![(0, 1), (1, 2), (2, 3)]),
        other => bail!("unknown fixture '{other}' (expected k2, triangle, triangle-pendant, path4)"),
    };
    let g = Graph::from_pairs(n, &pairs)?;
    let mut x = Matrix::zeros(n, 1);
    x[(0, 0)] = 1.0;
    Ok((g, x))
}

pub fn sbm(cfg: &SbmConfig, run_seed: u64) -> Result<Dataset> {
    Ok(synth_sbm(cfg.n, cfg.k, cfg.p_in, cfg.p_out, cfg.feature_dim, cfg.noise, cfg.seed.unwrap_or(run_seed))?)
}

/// Graph and node features for the operator-level commands.
pub fn graph_and_features(input: &InputConfig, seed: u64) -> Result<(Graph, Matrix)> {
    check_single_source(input)?;
    if let Some(name) = &input.fixture {
        return fixture(name);
    }
    if let Some(edges) = &input.edges {
        return match &input.features {
            Some(fp) => {
                let x = read_features(fp)?;
                let g = read_edge_list(edges, Some(x.nrows()))
                    .with_context(|| format!("reading {}", edges.display()))?;
                Ok((g, x))
            }
            None => {
                let g = read_edge_list(edges, None).with_context(|| format!("reading {}", edges.display()))?;
                let mut x = Matrix::zeros(g.num_nodes(), 1);
                if g.num_nodes() > 0 {
                    x[(0, 0)] = 1.0;
                }
                Ok((g, x))
            }
        };
    }
    let ds = dataset(input, seed)?;
    Ok((ds.graph, ds.features))
}

/// A labelled node-classification dataset for the model commands.
pub fn dataset(input: &InputConfig, seed: u64) -> Result<Dataset> {
    check_single_source(input)?;
    if input.fixture.is_some() {
        bail!("fixtures carry no labels; use edges/features/labels, dataset or sbm");
    }
    if let Some(dir) = &input.dataset {
        return load_dataset_dir(dir).with_context(|| format!("loading dataset {}", dir.display()));
    }
    if let Some(edges) = &input.edges {
        let (Some(f), Some(l)) = (&input.features, &input.labels) else {
            bail!("input.edges needs input.features and input.labels here");
        };
        return Ok(load_dataset(edges, f, l, None)?);
    }
    sbm(&input.sbm.clone().unwrap_or_default(), seed)
}
