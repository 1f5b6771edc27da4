//! Anchor-node defense: influence scores, universal patches and baselines.

mod influence;
mod jaccard;
mod patch;

pub use influence::{
    approx_influence, exact_influence, influence_scores, influence_scores_from, InfluenceTable,
    DEFAULT_ALPHA,
};
pub use jaccard::{jaccard_prune, jaccard_similarity, JaccardFilter, DEFAULT_JACCARD_THRESHOLD};
pub use patch::{
    apply_patch, degree_anchors, random_anchors, select_anchors, DefensePatch, Provenance,
    PurifiedGraph,
};
