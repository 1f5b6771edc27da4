use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{SparseGraph, SplitSet};
use crate::models::{local_propagate, softmax, LinearSurrogate};

/// Default degree-scaling exponent.
pub const DEFAULT_ALPHA: f64 = 2.0;

/// Averaged influence score `I*(v)` of every node.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceTable {
    pub scores: Vec<f64>,
    pub alpha: f64,
    /// Size of the labeled subset the scores were averaged over.
    pub sub_size: usize,
}

impl InfluenceTable {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn degree_scale(degree: usize, alpha: f64) -> f64 {
    (degree.max(1) as f64).powf(-alpha)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Precondition(format!("alpha {alpha} must be finite and >= 0")));
    }
    Ok(())
}

fn row_max(row: ArrayView1<'_, f64>) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `I*(v) = d_v^{-α} (max_c 𝒲[v, c] - mean_{s ∈ V_sub} 𝒲[v, y_s])` over all
/// nodes of `g`, with `V_sub` taken from `splits`.
pub fn influence_scores(
    surrogate: &LinearSurrogate,
    g: &SparseGraph,
    splits: &SplitSet,
    alpha: f64,
) -> Result<InfluenceTable> {
    let collapsed = surrogate.collapsed();
    if collapsed.nrows() != g.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "surrogate was fitted on {} nodes, graph has {}",
            collapsed.nrows(),
            g.num_nodes()
        )));
    }
    let mut sub_labels = Vec::with_capacity(splits.sub().len());
    for &s in splits.sub() {
        g.check_node(s)?;
        let y = g
            .label(s)
            .ok_or_else(|| Error::Precondition(format!("influence subset node {s} is unlabeled")))?;
        sub_labels.push(y);
    }
    influence_scores_from(collapsed, g.degrees(), &sub_labels, alpha)
}

/// [`influence_scores`] from its raw inputs: collapsed weights, raw degrees
/// and the labels of the averaging subset.
pub fn influence_scores_from(
    collapsed: &Array2<f64>,
    degrees: &[usize],
    sub_labels: &[usize],
    alpha: f64,
) -> Result<InfluenceTable> {
    check_alpha(alpha)?;
    if sub_labels.is_empty() {
        return Err(Error::Precondition("influence subset is empty".into()));
    }
    if degrees.len() != collapsed.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} degrees for {} weight rows",
            degrees.len(),
            collapsed.nrows()
        )));
    }
    let classes = collapsed.ncols();
    let mut fraction = vec![0.0; classes];
    for &y in sub_labels {
        if y >= classes {
            return Err(Error::DimensionMismatch(format!(
                "label {y} exceeds {classes} weight columns"
            )));
        }
        fraction[y] += 1.0;
    }
    for f in &mut fraction {
        *f /= sub_labels.len() as f64;
    }
    let scores = (0..collapsed.nrows())
        .into_par_iter()
        .map(|v| {
            let row = collapsed.row(v);
            let mean_true: f64 = row.iter().zip(&fraction).map(|(w, f)| w * f).sum();
            degree_scale(degrees[v], alpha) * (row_max(row) - mean_true)
        })
        .collect();
    Ok(InfluenceTable {
        scores,
        alpha,
        sub_size: sub_labels.len(),
    })
}

fn target_label(g: &SparseGraph, u: usize) -> Result<usize> {
    g.check_node(u)?;
    g.label(u)
        .ok_or_else(|| Error::Precondition(format!("node {u} is unlabeled")))
}

/// Per-target approximation `I*_u(v) = (max_c 𝒲[v, c] - 𝒲[v, y_u]) / d_v^α`.
pub fn approx_influence(
    surrogate: &LinearSurrogate,
    g: &SparseGraph,
    u: usize,
    v: usize,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let y = target_label(g, u)?;
    g.check_node(v)?;
    let row = surrogate.collapsed().row(v);
    Ok(degree_scale(g.degree(v), alpha) * (row_max(row) - row[y]))
}

/// Exact score `I_u(v) = (Σ_c Z[v, c] 𝒲[v, c] - 𝒲[v, y_u]) / d_v^α`, with `Z`
/// the surrogate's output on `g`.
pub fn exact_influence(
    surrogate: &LinearSurrogate,
    g: &SparseGraph,
    u: usize,
    v: usize,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let y = target_label(g, u)?;
    g.check_node(v)?;
    let collapsed = surrogate.collapsed();
    let logits = local_propagate(g, v, surrogate.num_layers(), &mut |j| collapsed.row(j).to_owned());
    let z = softmax(logits.view());
    let row = collapsed.row(v);
    Ok(degree_scale(g.degree(v), alpha) * (z.dot(&row) - row[y]))
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::testutil::{random_graph, surrogate};

    #[test]
    fn constant_row_scores_zero() {
        let w = array![[0.3, 0.3, 0.3], [1.0, 0.0, 2.0]];
        let t = influence_scores_from(&w, &[2, 1], &[0, 1, 2], 2.0).unwrap();
        assert_eq!(t.scores[0], 0.0);
        assert!((t.scores[1] - (2.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn degree_scaling_ratio() {
        let w = array![[0.1, 0.9], [0.1, 0.9]];
        let t = influence_scores_from(&w, &[1, 4], &[0], 2.0).unwrap();
        assert!((t.scores[0] / t.scores[1] - 16.0).abs() < 1e-9);
        // isolated nodes use degree 1
        let t = influence_scores_from(&w, &[0, 1], &[0], 2.0).unwrap();
        assert_eq!(t.scores[0], t.scores[1]);
    }

    #[test]
    fn bad_inputs() {
        let w = array![[0.1, 0.9]];
        assert!(influence_scores_from(&w, &[1], &[], 2.0).is_err());
        assert!(influence_scores_from(&w, &[1], &[0], -1.0).is_err());
        assert!(influence_scores_from(&w, &[1], &[5], 2.0).is_err());
    }

    #[test]
    fn averaged_score_matches_direct_average() {
        let (g, s) = random_graph(30, 0.1, 3, 5, 4);
        let m = surrogate(&g, &s, 2);
        let t = influence_scores(&m, &g, &s, 2.0).unwrap();
        for v in 0..30 {
            let direct: f64 = s
                .sub()
                .iter()
                .map(|&u| approx_influence(&m, &g, u, v, 2.0).unwrap())
                .sum::<f64>()
                / s.sub().len() as f64;
            assert!((t.scores[v] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn upper_bound_relation() {
        let (g, s) = random_graph(25, 0.15, 3, 5, 8);
        let m = surrogate(&g, &s, 2);
        for u in 0..25 {
            for v in 0..25 {
                let exact = exact_influence(&m, &g, u, v, 2.0).unwrap();
                let approx = approx_influence(&m, &g, u, v, 2.0).unwrap();
                assert!(approx >= exact - 1e-12);
            }
        }
    }

    #[test]
    fn one_hot_output_reduces_to_class_difference() {
        // a single huge weight makes Z[v] one-hot at class 1
        let g = SparseGraph::new(2, [], array![[0.0, 1.0], [1.0, 0.0]], vec![Some(0), Some(0)]).unwrap();
        let m = LinearSurrogate::from_weights(
            array![[0.0, 0.0], [0.0, 200.0]],
            1,
            crate::models::FeatureScaling::Identity,
            Default::default(),
            &g,
        )
        .unwrap();
        let exact = exact_influence(&m, &g, 1, 0, 2.0).unwrap();
        assert!((exact - (200.0 - 0.0)).abs() < 1e-9);
    }
}
