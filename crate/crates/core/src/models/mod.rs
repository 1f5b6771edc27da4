//! Node classifiers: the linear (SGC-style) surrogate and the two-layer GCN.

mod checkpoint;
mod gcn;
mod linear;
mod optim;

use std::collections::{HashMap, HashSet};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, ModelKind};
pub use gcn::{train_gcn_victim, GcnObjective, GcnVictim};
pub use linear::{train_linear_surrogate, LinearObjective, LinearSurrogate};
pub use optim::OptimizerKind;

/// Hyper-parameters shared by both models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Hidden width of the GCN.
    pub hidden: usize,
    /// Propagation depth of the linear model.
    pub num_layers: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 200,
            weight_decay: 5e-4,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            hidden: 16,
            num_layers: 2,
        }
    }
}

/// Per-row feature preprocessing fixed at training time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScaling {
    /// Binary rows are scaled to unit L1 norm (all-zero rows stay zero).
    RowL1,
    Identity,
}

impl FeatureScaling {
    /// `RowL1` when every entry is 0 or 1, `Identity` otherwise.
    pub fn infer(x: &Array2<f64>) -> Self {
        if x.iter().all(|&v| v == 0.0 || v == 1.0) {
            FeatureScaling::RowL1
        } else {
            FeatureScaling::Identity
        }
    }

    pub fn apply_row(self, row: ArrayView1<'_, f64>) -> Array1<f64> {
        match self {
            FeatureScaling::Identity => row.to_owned(),
            FeatureScaling::RowL1 => {
                let s: f64 = row.iter().map(|v| v.abs()).sum();
                if s > 0.0 {
                    row.mapv(|v| v / s)
                } else {
                    row.to_owned()
                }
            }
        }
    }

    pub fn apply(self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        if self == FeatureScaling::RowL1 {
            for mut row in out.rows_mut() {
                let s: f64 = row.iter().map(|v| v.abs()).sum();
                if s > 0.0 {
                    row.mapv_inplace(|v| v / s);
                }
            }
        }
        out
    }
}

/// Model outputs for every node.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub logits: Array2<f64>,
    pub probabilities: Array2<f64>,
    pub classes: Vec<usize>,
}

impl Prediction {
    pub fn from_logits(logits: Array2<f64>) -> Self {
        let probabilities = softmax_rows(&logits);
        let classes = logits.rows().into_iter().map(|r| argmax(r)).collect();
        Self {
            logits,
            probabilities,
            classes,
        }
    }
}

/// Shared interface of the surrogate and the victim.
pub trait NodeClassifier: Sync {
    fn num_features(&self) -> usize;
    fn num_classes(&self) -> usize;

    /// Full forward pass on `g`, which may differ structurally from the
    /// training graph.
    fn logits(&self, g: &SparseGraph) -> Result<Array2<f64>>;

    /// Logits of node `u` alone, touching only its receptive field.
    fn node_logits(&self, g: &SparseGraph, u: usize) -> Result<Array1<f64>>;

    /// Per-node input rows fed into propagation (`X W` for the linear
    /// model, `X W0` for the GCN). Depends on the features only, so one
    /// projection serves every structural variant of a graph.
    fn input_projection(&self, g: &SparseGraph) -> Result<Array2<f64>>;

    /// [`NodeClassifier::node_logits`] from a precomputed
    /// [`NodeClassifier::input_projection`] of `g`'s features.
    fn node_logits_projected(
        &self,
        g: &SparseGraph,
        u: usize,
        projection: ArrayView2<'_, f64>,
    ) -> Result<Array1<f64>>;

    fn predict(&self, g: &SparseGraph) -> Result<Prediction> {
        Ok(Prediction::from_logits(self.logits(g)?))
    }

    fn predict_node(&self, g: &SparseGraph, u: usize) -> Result<usize> {
        Ok(argmax(self.node_logits(g, u)?.view()))
    }
}

pub fn predict(model: &impl NodeClassifier, g: &SparseGraph) -> Result<Prediction> {
    model.predict(g)
}

/// Fraction of `nodes` whose predicted class equals their label.
pub fn accuracy(pred: &Prediction, g: &SparseGraph, nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::Precondition("accuracy over an empty node set".into()));
    }
    let mut correct = 0usize;
    for &u in nodes {
        g.check_node(u)?;
        let label = g
            .label(u)
            .ok_or_else(|| Error::Precondition(format!("node {u} is unlabeled")))?;
        if pred.classes[u] == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / nodes.len() as f64)
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(row: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out = row.mapv(|v| (v - max).exp());
    let s = out.sum();
    out /= s;
    out
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let p = softmax(row.view());
        row.assign(&p);
    }
    out
}

/// `-ln softmax(row)[class]`, computed with log-sum-exp.
pub fn cross_entropy(row: ArrayView1<'_, f64>, class: usize) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    lse - row[class]
}

/// Mean cross-entropy and its gradient w.r.t. the logits of `rows`.
pub(crate) fn cross_entropy_grad(logits: ArrayView2<'_, f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = labels.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, (row, &y)) in logits.outer_iter().zip(labels).enumerate() {
        loss += cross_entropy(row, y);
        let mut g = softmax(row);
        g[y] -= 1.0;
        grad.row_mut(i).assign(&(g / n));
    }
    (loss / n, grad)
}

/// Uniform Glorot initialization in `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-s..=s))
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Labels of `nodes`, failing on unlabeled ones.
pub(crate) fn labels_of(g: &SparseGraph, nodes: &[usize]) -> Result<Vec<usize>> {
    nodes
        .iter()
        .map(|&u| {
            g.check_node(u)?;
            g.label(u)
                .ok_or_else(|| Error::Precondition(format!("node {u} is unlabeled")))
        })
        .collect()
}

pub(crate) fn warn_if_single_class(labels: &[usize]) {
    let distinct: HashSet<usize> = labels.iter().copied().collect();
    if distinct.len() <= 1 {
        log::warn!("training set contains a single class; predictions will be degenerate");
    }
}

/// Validation accuracy of `logits` rows against `labels`.
pub(crate) fn rows_accuracy(logits: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .filter(|(row, &y)| argmax(row.view()) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Normalized-operator weight between adjacent (or identical) nodes.
#[inline]
pub(crate) fn norm_weight(g: &SparseGraph, i: usize, j: usize) -> f64 {
    1.0 / (((g.degree(i) + 1) * (g.degree(j) + 1)) as f64).sqrt()
}

/// Row `u` of `Â^hops · M`, where `base(j)` yields row `j` of `M`.
///
/// Only rows of `M` within `hops` of `u` are requested, each at most once.
pub(crate) fn local_propagate(
    g: &SparseGraph,
    u: usize,
    hops: usize,
    base: &mut dyn FnMut(usize) -> Array1<f64>,
) -> Array1<f64> {
    // levels[t] = nodes within t hops of u
    let mut levels: Vec<Vec<usize>> = vec![vec![u]];
    let mut seen: HashSet<usize> = HashSet::from([u]);
    for _ in 0..hops {
        let mut next = levels.last().unwrap().clone();
        for &i in levels.last().unwrap() {
            for &j in g.neighbors(i) {
                if seen.insert(j) {
                    next.push(j);
                }
            }
        }
        levels.push(next);
    }
    let mut values: HashMap<usize, Array1<f64>> =
        levels[hops].iter().map(|&j| (j, base(j))).collect();
    for t in (0..hops).rev() {
        let mut next_values = HashMap::with_capacity(levels[t].len());
        for &i in &levels[t] {
            let mut acc = values[&i].clone() * norm_weight(g, i, i);
            for &j in g.neighbors(i) {
                acc.scaled_add(norm_weight(g, i, j), &values[&j]);
            }
            next_values.insert(i, acc);
        }
        values = next_values;
    }
    values.remove(&u).expect("target row")
}
