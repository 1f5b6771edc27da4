//! Small seeded fixtures shared by unit tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{SparseGraph, SplitSet};
use crate::models::{train_linear_surrogate, LinearSurrogate, TrainingConfig};

/// Erdős–Rényi graph with noisy class-prototype features and a
/// 40/20/40 split.
pub fn random_graph(n: usize, p: f64, classes: usize, dim: usize, seed: u64) -> (SparseGraph, SplitSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let x = Array2::from_shape_fn((n, dim), |(i, j)| {
        let signal = if j % classes == labels[i] { 1.0 } else { 0.0 };
        signal + 0.8 * (rng.random::<f64>() - 0.5)
    });
    let g = SparseGraph::new(n, edges, x, labels.into_iter().map(Some).collect())
        .unwrap()
        .with_num_classes(classes)
        .unwrap();
    let n_train = n * 2 / 5;
    let n_val = n / 5;
    let splits = SplitSet::new(
        (0..n_train).collect(),
        (n_train..n_train + n_val).collect(),
        (n_train + n_val..n).collect(),
    );
    (g, splits)
}

pub fn surrogate(g: &SparseGraph, splits: &SplitSet, layers: usize) -> LinearSurrogate {
    let cfg = TrainingConfig {
        num_layers: layers,
        learning_rate: 0.05,
        epochs: 100,
        ..Default::default()
    };
    train_linear_surrogate(g, splits, &cfg).unwrap()
}
