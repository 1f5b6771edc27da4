//! Immutable undirected graphs in compressed sparse row form.
//!
//! A [`SparseGraph`] owns a symmetric 0/1 adjacency with an empty diagonal,
//! a dense feature matrix and per-node labels. Features and labels are shared
//! behind `Arc`, so structural edits through [`SparseGraph::flip_edges`] only
//! copy the CSR arrays.

mod io;
mod normalize;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_graph, read_edge_list, read_features, read_labels, read_splits, write_edge_list,
    write_features, write_labels, write_splits,
};
pub use normalize::{normalized_operator, NormalizedOperator};

/// Undirected graph with node features and (possibly partial) labels.
#[derive(Clone, Debug)]
pub struct SparseGraph {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    degrees: Vec<usize>,
    features: Arc<Array2<f64>>,
    labels: Arc<Vec<Option<usize>>>,
    num_classes: usize,
}

impl PartialEq for SparseGraph {
    fn eq(&self, other: &Self) -> bool {
        self.indptr == other.indptr
            && self.indices == other.indices
            && self.num_classes == other.num_classes
            && (Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels)
            && (Arc::ptr_eq(&self.features, &other.features) || self.features == other.features)
    }
}

impl SparseGraph {
    /// Builds a graph from an arbitrary edge list.
    ///
    /// Edges are symmetrized and de-duplicated and self-loops are dropped.
    /// `labels` must have one entry per node; `None` marks an unlabeled node.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Array2<f64>,
        labels: Vec<Option<usize>>,
    ) -> Result<Self> {
        if features.nrows() != num_nodes {
            return Err(Error::DimensionMismatch(format!(
                "feature matrix has {} rows, graph has {} nodes",
                features.nrows(),
                num_nodes
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                num_nodes
            )));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for (u, v) in edges {
            for index in [u, v] {
                if index >= num_nodes {
                    return Err(Error::NodeOutOfRange { index, num_nodes });
                }
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        let num_classes = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
        Ok(Self::from_adjacency(
            adj,
            Arc::new(features),
            Arc::new(labels),
            num_classes,
        ))
    }

    /// Overrides the class count, e.g. when a split does not contain every class.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if let Some(c) = self.labels.iter().flatten().find(|&&c| c >= num_classes) {
            return Err(Error::Precondition(format!(
                "label {c} is not below num_classes = {num_classes}"
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    fn from_adjacency(
        mut adj: Vec<Vec<usize>>,
        features: Arc<Array2<f64>>,
        labels: Arc<Vec<Option<usize>>>,
        num_classes: usize,
    ) -> Self {
        let mut indptr = Vec::with_capacity(adj.len() + 1);
        let mut indices = Vec::new();
        let mut degrees = Vec::with_capacity(adj.len());
        indptr.push(0);
        for row in adj.iter_mut() {
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(row);
            degrees.push(row.len());
            indptr.push(indices.len());
        }
        Self {
            indptr,
            indices,
            degrees,
            features,
            labels,
            num_classes,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.degrees.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn degree(&self, u: usize) -> usize {
        self.degrees[u]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Sorted neighbor list of `u`.
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.indices[self.indptr[u]..self.indptr[u + 1]]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, u: usize) -> Option<usize> {
        self.labels[u]
    }

    /// CSR row pointer and column index arrays.
    pub fn csr(&self) -> (&[usize], &[usize]) {
        (&self.indptr, &self.indices)
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub(crate) fn check_node(&self, index: usize) -> Result<()> {
        if index >= self.num_nodes() {
            return Err(Error::NodeOutOfRange {
                index,
                num_nodes: self.num_nodes(),
            });
        }
        Ok(())
    }

    /// Applies `flips` in order and returns the edited graph.
    ///
    /// Each add requires the edge to be absent at that point of the sequence
    /// and each remove requires it to be present. Features and labels are
    /// shared with `self`.
    pub fn flip_edges(&self, flips: &[EdgeFlip]) -> Result<SparseGraph> {
        let mut overlay: BTreeMap<(usize, usize), bool> = BTreeMap::new();
        for flip in flips {
            self.check_node(flip.u)?;
            self.check_node(flip.v)?;
            if flip.u == flip.v {
                return Err(Error::Precondition(format!(
                    "self-loop flip on node {}",
                    flip.u
                )));
            }
            let key = (flip.u.min(flip.v), flip.u.max(flip.v));
            let present = overlay
                .get(&key)
                .copied()
                .unwrap_or_else(|| self.has_edge(key.0, key.1));
            match flip.op {
                FlipOp::Add if present => {
                    return Err(Error::Precondition(format!(
                        "cannot add existing edge ({}, {})",
                        key.0, key.1
                    )))
                }
                FlipOp::Remove if !present => {
                    return Err(Error::Precondition(format!(
                        "cannot remove absent edge ({}, {})",
                        key.0, key.1
                    )))
                }
                FlipOp::Add => overlay.insert(key, true),
                FlipOp::Remove => overlay.insert(key, false),
            };
        }
        // edges that ended where they started need no rebuild
        overlay.retain(|&(a, b), present| *present != self.has_edge(a, b));
        if overlay.is_empty() {
            return Ok(self.clone());
        }

        let mut row_edits: BTreeMap<usize, Vec<(usize, bool)>> = BTreeMap::new();
        for (&(a, b), &present) in &overlay {
            row_edits.entry(a).or_default().push((b, present));
            row_edits.entry(b).or_default().push((a, present));
        }
        let n = self.num_nodes();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(self.indices.len() + 2 * overlay.len());
        let mut degrees = Vec::with_capacity(n);
        indptr.push(0);
        for u in 0..n {
            match row_edits.get(&u) {
                None => indices.extend_from_slice(self.neighbors(u)),
                Some(edits) => {
                    let mut row: BTreeSet<usize> = self.neighbors(u).iter().copied().collect();
                    for &(v, present) in edits {
                        if present {
                            row.insert(v);
                        } else {
                            row.remove(&v);
                        }
                    }
                    indices.extend(row);
                }
            }
            degrees.push(indices.len() - indptr[u]);
            indptr.push(indices.len());
        }
        Ok(SparseGraph {
            indptr,
            indices,
            degrees,
            features: Arc::clone(&self.features),
            labels: Arc::clone(&self.labels),
            num_classes: self.num_classes,
        })
    }

    /// Restricts the graph to its largest connected component.
    ///
    /// Returns the component graph and, for each new index, the original node.
    /// Ties between equally large components go to the one containing the
    /// smallest node index.
    pub fn largest_connected_component(&self) -> (SparseGraph, Vec<usize>) {
        let n = self.num_nodes();
        let mut component = vec![usize::MAX; n];
        let mut best: (usize, usize) = (0, 0);
        let mut queue = VecDeque::new();
        let mut next_id = 0;
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let mut size = 0;
            component[start] = next_id;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                size += 1;
                for &v in self.neighbors(u) {
                    if component[v] == usize::MAX {
                        component[v] = next_id;
                        queue.push_back(v);
                    }
                }
            }
            if size > best.1 {
                best = (next_id, size);
            }
            next_id += 1;
        }
        let keep: Vec<usize> = (0..n).filter(|&u| component[u] == best.0).collect();
        let mut remap = vec![usize::MAX; n];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let adj: Vec<Vec<usize>> = keep
            .iter()
            .map(|&old| self.neighbors(old).iter().map(|&v| remap[v]).collect())
            .collect();
        let features = self.features.select(ndarray::Axis(0), &keep);
        let labels: Vec<Option<usize>> = keep.iter().map(|&old| self.labels[old]).collect();
        let graph = SparseGraph::from_adjacency(
            adj,
            Arc::new(features),
            Arc::new(labels),
            self.num_classes,
        );
        (graph, keep)
    }

    /// Checks every structural invariant; used by tests and loaders.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.features.nrows() != n || self.labels.len() != n {
            return Err(Error::DimensionMismatch(
                "features/labels do not match node count".into(),
            ));
        }
        for u in 0..n {
            let row = self.neighbors(u);
            if row.len() != self.degrees[u] {
                return Err(Error::Precondition(format!("stale degree for node {u}")));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Precondition(format!("unsorted row {u}")));
            }
            for &v in row {
                if v == u {
                    return Err(Error::Precondition(format!("self-loop on node {u}")));
                }
                if v >= n || !self.has_edge(v, u) {
                    return Err(Error::Precondition(format!("asymmetric edge ({u}, {v})")));
                }
            }
        }
        if let Some(c) = self.labels.iter().flatten().find(|&&c| c >= self.num_classes) {
            return Err(Error::Precondition(format!("label {c} out of range")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipOp {
    Add,
    Remove,
}

/// One symmetric edge edit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeFlip {
    pub u: usize,
    pub v: usize,
    pub op: FlipOp,
}

impl EdgeFlip {
    pub fn add(u: usize, v: usize) -> Self {
        Self { u, v, op: FlipOp::Add }
    }

    pub fn remove(u: usize, v: usize) -> Self {
        Self {
            u,
            v,
            op: FlipOp::Remove,
        }
    }

    /// The flip that undoes this one.
    pub fn inverse(self) -> Self {
        let op = match self.op {
            FlipOp::Add => FlipOp::Remove,
            FlipOp::Remove => FlipOp::Add,
        };
        Self { op, ..self }
    }
}

/// Inverse flips of `flips`, in reverse order.
pub fn inverse_flips(flips: &[EdgeFlip]) -> Vec<EdgeFlip> {
    flips.iter().rev().map(|f| f.inverse()).collect()
}

/// Train/validation/test partition plus the labeled subset used for
/// influence averaging.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Vec<usize>,
    #[serde(rename = "valid")]
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sub: Option<Vec<usize>>,
}

impl SplitSet {
    pub fn new(train: Vec<usize>, validation: Vec<usize>, test: Vec<usize>) -> Self {
        Self {
            train,
            validation,
            test,
            sub: None,
        }
    }

    pub fn with_sub(mut self, sub: Vec<usize>) -> Self {
        self.sub = Some(sub);
        self
    }

    /// Labeled subset used for influence averaging; defaults to the train set.
    pub fn sub(&self) -> &[usize] {
        self.sub.as_deref().unwrap_or(&self.train)
    }

    /// Seeded random partition of the labeled nodes by fractions.
    pub fn random(
        labels: &[Option<usize>],
        train_fraction: f64,
        validation_fraction: f64,
        seed: u64,
    ) -> Self {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        let mut nodes: Vec<usize> = (0..labels.len()).filter(|&u| labels[u].is_some()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        nodes.shuffle(&mut rng);
        let n = nodes.len();
        let n_train = ((n as f64) * train_fraction).round() as usize;
        let n_valid = (((n as f64) * validation_fraction).round() as usize).min(n - n_train);
        let mut train = nodes[..n_train].to_vec();
        let mut validation = nodes[n_train..n_train + n_valid].to_vec();
        let mut test = nodes[n_train + n_valid..].to_vec();
        train.sort_unstable();
        validation.sort_unstable();
        test.sort_unstable();
        Self::new(train, validation, test)
    }

    /// Checks disjointness, ranges, labels and `sub ⊆ train`.
    pub fn validate(&self, graph: &SparseGraph) -> Result<()> {
        let n = graph.num_nodes();
        let mut seen = vec![false; n];
        for (name, set) in [
            ("train", &self.train),
            ("valid", &self.validation),
            ("test", &self.test),
        ] {
            for &u in set {
                graph.check_node(u)?;
                if seen[u] {
                    return Err(Error::Precondition(format!(
                        "node {u} appears twice across splits (in {name})"
                    )));
                }
                seen[u] = true;
            }
        }
        let train: BTreeSet<usize> = self.train.iter().copied().collect();
        for &u in self.sub() {
            if !train.contains(&u) {
                return Err(Error::Precondition(format!(
                    "sub node {u} is not a training node"
                )));
            }
        }
        for &u in self.train.iter().chain(&self.validation) {
            if graph.label(u).is_none() {
                return Err(Error::Precondition(format!("split node {u} is unlabeled")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Path 0-1-...-(n-1) with one-dimensional zero features.
    pub fn path(n: usize) -> SparseGraph {
        let edges = (1..n).map(|v| (v - 1, v));
        SparseGraph::new(n, edges, Array2::zeros((n, 1)), vec![Some(0); n]).unwrap()
    }
}
