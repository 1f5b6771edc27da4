//! Dataset loading and split generation.

use guard_core::graph::{read_edge_list, read_features, read_labels, read_splits, SparseGraph, SplitSet};

use crate::config::{DatasetSpec, ExperimentConfig};
use crate::error::{HarnessError, HarnessResult};
use crate::synth::{cora_like, erdos_renyi, stochastic_block};

/// A graph plus the split read from disk, if any.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: SparseGraph,
    pub fixed_splits: Option<SplitSet>,
}

impl Dataset {
    /// Splits for repeat `r`: the fixed file split, or a fresh seeded one.
    pub fn splits(&self, cfg: &ExperimentConfig, r: usize) -> SplitSet {
        match &self.fixed_splits {
            Some(s) => s.clone(),
            None => SplitSet::random(
                self.graph.labels(),
                cfg.split.train,
                cfg.split.valid,
                cfg.repeat_seed(r),
            ),
        }
    }
}

fn remap(nodes: &[usize], new_index: &[Option<usize>]) -> Vec<usize> {
    let mut out: Vec<usize> = nodes.iter().filter_map(|&u| new_index.get(u).copied().flatten()).collect();
    out.sort_unstable();
    out
}

pub fn load_dataset(cfg: &ExperimentConfig) -> HarnessResult<Dataset> {
    let data = HarnessError::Data;
    match &cfg.dataset {
        DatasetSpec::Files {
            edges,
            features,
            labels,
            splits,
            largest_component,
        } => {
            let x = read_features(features).map_err(data)?;
            let n = x.nrows();
            let edge_list = read_edge_list(edges, n).map_err(data)?;
            let y = read_labels(labels, n).map_err(data)?;
            let mut graph = SparseGraph::new(n, edge_list, x, y).map_err(data)?;
            let mut fixed = splits.as_ref().map(read_splits).transpose().map_err(data)?;
            if *largest_component {
                let (component, original) = graph.largest_connected_component();
                let mut new_index = vec![None; n];
                for (new, &old) in original.iter().enumerate() {
                    new_index[old] = Some(new);
                }
                fixed = fixed.map(|s| {
                    let sub = s.sub().to_vec();
                    let mapped = SplitSet::new(
                        remap(&s.train, &new_index),
                        remap(&s.validation, &new_index),
                        remap(&s.test, &new_index),
                    );
                    if sub == s.train {
                        mapped
                    } else {
                        mapped.with_sub(remap(&sub, &new_index))
                    }
                });
                let classes = graph.num_classes();
                graph = component.with_num_classes(classes).map_err(data)?;
            }
            if let Some(s) = &fixed {
                s.validate(&graph).map_err(data)?;
            }
            graph.validate().map_err(data)?;
            Ok(Dataset {
                graph,
                fixed_splits: fixed,
            })
        }
        DatasetSpec::ErdosRenyi(spec) => synthetic(erdos_renyi(spec)),
        DatasetSpec::Sbm(spec) => synthetic(stochastic_block(spec)),
        DatasetSpec::CoraLike(spec) => synthetic(cora_like(spec)),
    }
}

fn synthetic(g: guard_core::Result<SparseGraph>) -> HarnessResult<Dataset> {
    Ok(Dataset {
        graph: g.map_err(|e| HarnessError::Config(format!("synthetic generator: {e}")))?,
        fixed_splits: None,
    })
}
