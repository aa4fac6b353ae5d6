//! Immutable undirected weighted graphs in compressed-row form.
//!
//! Every undirected edge is stored as two arcs `(i, j)` and `(j, i)` carrying
//! the same weight. Rows are sorted by neighbor id, which makes the arc layout
//! canonical: two graphs built from the same edge multiset are bit-identical.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    row_offsets: Arc<[usize]>,
    neighbor_ids: Arc<[usize]>,
    edge_weights: Arc<[f64]>,
    // arc index of (j, i) for every stored arc (i, j)
    reverse_arc: Arc<[usize]>,
}

/// Weighted degrees `D_i = sum_j A_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector {
    pub values: Vec<f64>,
}

impl DegreeVector {
    pub fn all_positive(&self) -> bool {
        self.values.iter().all(|&d| d > 0.0)
    }
}

impl std::ops::Index<usize> for DegreeVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl Graph {
    /// Builds a graph from an edge list. Edges are symmetrized, self-loops are
    /// dropped and repeated pairs (in either orientation) have their weights summed.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, w) in edges {
            for index in [i, j] {
                if index >= num_nodes {
                    return Err(Error::IndexOutOfRange { index, num_nodes });
                }
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonPositiveWeight { i, j, weight: w });
            }
            if i == j {
                continue;
            }
            *merged.entry((i.min(j), i.max(j))).or_insert(0.0) += w;
        }

        let mut arcs: Vec<(usize, usize, f64)> = Vec::with_capacity(merged.len() * 2);
        for (&(i, j), &w) in &merged {
            arcs.push((i, j, w));
            arcs.push((j, i, w));
        }
        arcs.sort_by_key(|a| (a.0, a.1));

        let mut row_offsets = vec![0usize; num_nodes + 1];
        for &(i, _, _) in &arcs {
            row_offsets[i + 1] += 1;
        }
        for i in 0..num_nodes {
            row_offsets[i + 1] += row_offsets[i];
        }
        let neighbor_ids: Vec<usize> = arcs.iter().map(|a| a.1).collect();
        let edge_weights: Vec<f64> = arcs.iter().map(|a| a.2).collect();

        let mut reverse_arc = vec![0usize; arcs.len()];
        for i in 0..num_nodes {
            for a in row_offsets[i]..row_offsets[i + 1] {
                let j = neighbor_ids[a];
                let row = &neighbor_ids[row_offsets[j]..row_offsets[j + 1]];
                // rows are sorted and the reverse arc exists by construction
                let pos = row.binary_search(&i).expect("symmetric storage");
                reverse_arc[a] = row_offsets[j] + pos;
            }
        }

        Ok(Self {
            num_nodes,
            row_offsets: row_offsets.into(),
            neighbor_ids: neighbor_ids.into(),
            edge_weights: edge_weights.into(),
            reverse_arc: reverse_arc.into(),
        })
    }

    /// Unit-weight convenience constructor.
    pub fn from_pairs(num_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let edges: Vec<_> = pairs.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        Self::from_edges(num_nodes, &edges)
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self::from_edges(num_nodes, &[]).expect("empty graph is always valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored arcs (twice the number of undirected edges).
    pub fn num_arcs(&self) -> usize {
        self.neighbor_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_arcs() / 2
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn neighbor_ids(&self) -> &[usize] {
        &self.neighbor_ids
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weights
    }

    pub fn reverse_arc(&self, arc: usize) -> usize {
        self.reverse_arc[arc]
    }

    /// Arc index range of row `i`.
    pub fn arcs_of(&self, i: usize) -> std::ops::Range<usize> {
        self.row_offsets[i]..self.row_offsets[i + 1]
    }

    /// Iterates `(source, target, weight)` over every stored arc, in storage order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_nodes).flat_map(move |i| {
            self.arcs_of(i)
                .map(move |a| (i, self.neighbor_ids[a], self.edge_weights[a]))
        })
    }

    /// Undirected edges `(i, j, w)` with `i < j`; feeding them back to
    /// [`Graph::from_edges`] reproduces the graph exactly.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.arcs().filter(|&(i, j, _)| i < j).collect()
    }

    pub fn degrees(&self) -> DegreeVector {
        let values = (0..self.num_nodes)
            .map(|i| self.arcs_of(i).map(|a| self.edge_weights[a]).sum())
            .collect();
        DegreeVector { values }
    }

    pub fn is_connected(&self) -> bool {
        if self.num_nodes == 0 {
            return true;
        }
        let mut seen = vec![false; self.num_nodes];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for a in self.arcs_of(i) {
                let j = self.neighbor_ids[a];
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.num_nodes
    }

    /// Two-coloring by breadth-first search, component by component.
    pub fn is_bipartite(&self) -> bool {
        let mut color: Vec<Option<bool>> = vec![None; self.num_nodes];
        for start in 0..self.num_nodes {
            if color[start].is_some() {
                continue;
            }
            color[start] = Some(false);
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                let ci = color[i].unwrap();
                for a in self.arcs_of(i) {
                    let j = self.neighbor_ids[a];
                    match color[j] {
                        None => {
                            color[j] = Some(!ci);
                            queue.push_back(j);
                        }
                        Some(cj) if cj == ci => return false,
                        Some(_) => {}
                    }
                }
            }
        }
        true
    }

    /// Dense adjacency matrix. Intended for small graphs and tests.
    pub fn dense_adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.num_nodes, self.num_nodes);
        for (i, j, w) in self.arcs() {
            a[(i, j)] = w;
        }
        a
    }

    /// Sparse product `A X`.
    pub fn adjacency_times(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.num_nodes {
            return Err(Error::ShapeMismatch(format!(
                "features have {} rows, graph has {} nodes",
                x.nrows(),
                self.num_nodes
            )));
        }
        let mut out = Matrix::zeros(self.num_nodes, x.ncols());
        for (i, j, w) in self.arcs() {
            for c in 0..x.ncols() {
                out[(i, c)] += w * x[(j, c)];
            }
        }
        Ok(out)
    }

    /// Disjoint union of graphs. Returns the union and, for every node of the
    /// union, the index of the graph it came from.
    pub fn block_diagonal(graphs: &[Graph]) -> (Graph, Vec<usize>) {
        let total: usize = graphs.iter().map(|g| g.num_nodes).sum();
        let mut edges = Vec::new();
        let mut membership = Vec::with_capacity(total);
        let mut offset = 0;
        for (k, g) in graphs.iter().enumerate() {
            edges.extend(g.edges().into_iter().map(|(i, j, w)| (i + offset, j + offset, w)));
            membership.extend(std::iter::repeat_n(k, g.num_nodes));
            offset += g.num_nodes;
        }
        let union = Graph::from_edges(total, &edges).expect("shifted edges stay valid");
        (union, membership)
    }

    /// Serializes to the edge-list text format (`i j w` per line).
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, j, w) in self.edges() {
            out.push_str(&format!("{i} {j} {}\n", crate::linalg::fmt17(w)));
        }
        out
    }
}

/// Parses the edge-list text format: one edge per line, whitespace separated
/// `i j [w]`, zero-based, weight defaulting to 1.0; `#` starts a comment line.
pub fn parse_edge_list(text: &str, origin: &str) -> Result<Vec<(usize, usize, f64)>> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_string(),
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(err(format!("expected `i j [w]`, got {} fields", fields.len())));
        }
        let i = fields[0]
            .parse::<usize>()
            .map_err(|e| err(format!("bad node id '{}': {e}", fields[0])))?;
        let j = fields[1]
            .parse::<usize>()
            .map_err(|e| err(format!("bad node id '{}': {e}", fields[1])))?;
        let w = match fields.get(2) {
            Some(s) => s
                .parse::<f64>()
                .map_err(|e| err(format!("bad weight '{s}': {e}")))?,
            None => 1.0,
        };
        edges.push((i, j, w));
    }
    Ok(edges)
}

/// Reads an edge list file. When `num_nodes` is `None` it is inferred as the
/// largest node id plus one.
pub fn read_edge_list(path: &Path, num_nodes: Option<usize>) -> Result<Graph> {
    let text = std::fs::read_to_string(path)?;
    let edges = parse_edge_list(&text, &path.display().to_string())?;
    let n = num_nodes.unwrap_or_else(|| {
        edges
            .iter()
            .map(|&(i, j, _)| i.max(j) + 1)
            .max()
            .unwrap_or(0)
    });
    Graph::from_edges(n, &edges)
}
