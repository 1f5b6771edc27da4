use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::InfluenceTable;
use crate::error::{Error, Result};
use crate::graph::{EdgeFlip, SparseGraph};

const PATCH_VERSION: u32 = 1;

/// How a patch's anchors were chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Guard,
    Random,
    Degree,
}

/// Universal defensive patch: a ranked set of anchor nodes.
///
/// `scores[i]` is the ranking score of `anchors[i]`: the influence score for
/// [`Provenance::Guard`], the negated degree for [`Provenance::Degree`] and
/// zero for [`Provenance::Random`]. Anchors are ordered by decreasing score,
/// ties by ascending index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PatchFile", into = "PatchFile")]
pub struct DefensePatch {
    anchors: Vec<usize>,
    scores: Vec<f64>,
    k: usize,
    alpha: Option<f64>,
    provenance: Provenance,
    sorted: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PatchFile {
    version: u32,
    alpha: Option<f64>,
    k: usize,
    provenance: Provenance,
    anchors: Vec<usize>,
    scores: Vec<f64>,
}

impl From<DefensePatch> for PatchFile {
    fn from(p: DefensePatch) -> Self {
        PatchFile {
            version: PATCH_VERSION,
            alpha: p.alpha,
            k: p.k,
            provenance: p.provenance,
            anchors: p.anchors,
            scores: p.scores,
        }
    }
}

impl TryFrom<PatchFile> for DefensePatch {
    type Error = Error;

    fn try_from(f: PatchFile) -> Result<Self> {
        if f.version != PATCH_VERSION {
            return Err(Error::Precondition(format!(
                "unsupported patch version {}",
                f.version
            )));
        }
        DefensePatch::new(f.anchors, f.scores, f.k, f.alpha, f.provenance)
    }
}

impl DefensePatch {
    /// Checks lengths, duplicates and the score ordering.
    pub fn new(
        anchors: Vec<usize>,
        scores: Vec<f64>,
        k: usize,
        alpha: Option<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if anchors.len() != scores.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} anchors but {} scores",
                anchors.len(),
                scores.len()
            )));
        }
        if anchors.len() > k {
            return Err(Error::Precondition(format!(
                "{} anchors exceed k = {k}",
                anchors.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Precondition("non-finite anchor score".into()));
        }
        for i in 1..anchors.len() {
            let ordered = scores[i - 1] > scores[i]
                || (scores[i - 1] == scores[i] && anchors[i - 1] < anchors[i]);
            if !ordered {
                return Err(Error::Precondition(format!(
                    "anchors out of order at rank {i}"
                )));
            }
        }
        let mut sorted = anchors.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Precondition("duplicate anchor".into()));
        }
        Ok(Self {
            anchors,
            scores,
            k,
            alpha,
            provenance,
            sorted,
        })
    }

    /// Anchors in rank order.
    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Requested number of anchors (may exceed `anchors().len()` on small graphs).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn is_anchor(&self, v: usize) -> bool {
        self.sorted.binary_search(&v).is_ok()
    }

    /// Binary membership vector `p` over `num_nodes` nodes.
    pub fn mask(&self, num_nodes: usize) -> Vec<bool> {
        let mut p = vec![false; num_nodes];
        for &v in &self.anchors {
            if v < num_nodes {
                p[v] = true;
            }
        }
        p
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Ranks `(score, node)` pairs by decreasing score then ascending node and
/// keeps the first `k`.
fn top_k(mut entries: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    let k = k.min(entries.len());
    if k == 0 {
        return Vec::new();
    }
    if k < entries.len() {
        entries.select_nth_unstable_by(k - 1, cmp);
        entries.truncate(k);
    }
    entries.sort_unstable_by(cmp);
    entries
}

fn from_ranked(ranked: Vec<(f64, usize)>, k: usize, alpha: Option<f64>, provenance: Provenance) -> Result<DefensePatch> {
    let (scores, anchors) = ranked.into_iter().unzip();
    DefensePatch::new(anchors, scores, k, alpha, provenance)
}

/// The `k` nodes with the highest influence score.
pub fn select_anchors(table: &InfluenceTable, k: usize) -> Result<DefensePatch> {
    if table.scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Precondition("influence table has non-finite scores".into()));
    }
    let entries = table.scores.iter().copied().zip(0..).collect();
    from_ranked(top_k(entries, k), k, Some(table.alpha), Provenance::Guard)
}

/// `k` nodes drawn uniformly without replacement.
pub fn random_anchors(g: &SparseGraph, k: usize, seed: u64) -> Result<DefensePatch> {
    let n = g.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anchors = sample(&mut rng, n, k.min(n)).into_vec();
    anchors.sort_unstable();
    let scores = vec![0.0; anchors.len()];
    DefensePatch::new(anchors, scores, k, None, Provenance::Random)
}

/// The `k` lowest-degree nodes, ties by ascending index.
pub fn degree_anchors(g: &SparseGraph, k: usize) -> Result<DefensePatch> {
    let entries = g.degrees().iter().map(|&d| -(d as f64)).zip(0..).collect();
    from_ranked(top_k(entries, k), k, None, Provenance::Degree)
}

/// Graph `G_(u)`: the input with every edge between `target` and an anchor removed.
#[derive(Clone, Debug)]
pub struct PurifiedGraph {
    pub target: usize,
    pub graph: SparseGraph,
    /// Far endpoints of the removed edges, ascending.
    pub removed: Vec<usize>,
}

impl PurifiedGraph {
    pub fn removed_count(&self) -> usize {
        self.removed.len()
    }
}

/// Removes the target's anchor-incident edges.
pub fn apply_patch(g: &SparseGraph, patch: &DefensePatch, target: usize) -> Result<PurifiedGraph> {
    g.check_node(target)?;
    let removed: Vec<usize> = g
        .neighbors(target)
        .iter()
        .copied()
        .filter(|&v| patch.is_anchor(v))
        .collect();
    let flips: Vec<EdgeFlip> = removed.iter().map(|&v| EdgeFlip::remove(target, v)).collect();
    Ok(PurifiedGraph {
        target,
        graph: g.flip_edges(&flips)?,
        removed,
    })
}
