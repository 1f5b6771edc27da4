use crate::error::{Error, Result};
use crate::graph::{EdgeFlip, SparseGraph};

/// Default pruning threshold.
pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.01;

/// Feature-similarity edge filter for binary features.
#[derive(Clone, Debug)]
pub struct JaccardFilter {
    threshold: f64,
    supports: Vec<Vec<usize>>,
}

impl JaccardFilter {
    /// Indexes the feature supports of `g`; fails on non-binary features.
    pub fn new(g: &SparseGraph, threshold: f64) -> Result<Self> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::Precondition(format!("threshold {threshold} must be >= 0")));
        }
        let x = g.features();
        if let Some(bad) = x.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::NotApplicable(format!(
                "Jaccard pruning needs binary features, found {bad}"
            )));
        }
        let supports = x
            .rows()
            .into_iter()
            .map(|row| row.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(j, _)| j).collect())
            .collect();
        Ok(Self { threshold, supports })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `|x_a ∧ x_b| / |x_a ∨ x_b|`, zero when both rows are empty.
    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        let (sa, sb) = (&self.supports[a], &self.supports[b]);
        let (mut i, mut j, mut common) = (0, 0, 0usize);
        while i < sa.len() && j < sb.len() {
            match sa[i].cmp(&sb[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    common += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        let union = sa.len() + sb.len() - common;
        if union == 0 {
            0.0
        } else {
            common as f64 / union as f64
        }
    }

    pub fn keeps(&self, a: usize, b: usize) -> bool {
        self.similarity(a, b) >= self.threshold
    }

    /// Removals for every edge of `g` below the threshold, `u < v`.
    pub fn pruned_edges(&self, g: &SparseGraph) -> Vec<EdgeFlip> {
        g.edges()
            .filter(|&(u, v)| !self.keeps(u, v))
            .map(|(u, v)| EdgeFlip::remove(u, v))
            .collect()
    }

    /// Removals for the edges of `g` incident to `u` below the threshold.
    pub fn pruned_incident(&self, g: &SparseGraph, u: usize) -> Vec<EdgeFlip> {
        g.neighbors(u)
            .iter()
            .filter(|&&v| !self.keeps(u, v))
            .map(|&v| EdgeFlip::remove(u, v))
            .collect()
    }

    pub fn prune(&self, g: &SparseGraph) -> Result<SparseGraph> {
        if g.num_nodes() != self.supports.len() {
            return Err(Error::DimensionMismatch(format!(
                "filter indexed {} nodes, graph has {}",
                self.supports.len(),
                g.num_nodes()
            )));
        }
        g.flip_edges(&self.pruned_edges(g))
    }
}

/// Feature Jaccard similarity of two binary rows.
pub fn jaccard_similarity(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    let mut common = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (x, y) = (x != 0.0, y != 0.0);
        common += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        common as f64 / union as f64
    }
}

/// Removes every edge whose endpoint features have Jaccard similarity below `threshold`.
pub fn jaccard_prune(g: &SparseGraph, threshold: f64) -> Result<SparseGraph> {
    JaccardFilter::new(g, threshold)?.prune(g)
}
