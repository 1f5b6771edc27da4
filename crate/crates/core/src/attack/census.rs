use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::AttackResult;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// Number of top-ranked attacker nodes whose degrees enter the histogram.
pub const CENSUS_HISTOGRAM_TOP: usize = 500;

/// How often each node was picked as an attacker node across many attacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    /// `(node, count)` by decreasing count, ties by ascending node.
    pub frequencies: Vec<(usize, usize)>,
    /// Total number of injected edges.
    pub total: usize,
    /// Clean-graph degree → number of distinct attacker nodes with that
    /// degree, over the top [`CENSUS_HISTOGRAM_TOP`] attacker nodes.
    pub degree_histogram: BTreeMap<usize, usize>,
}

impl CensusReport {
    /// Builds the census from per-attack lists of injected endpoints.
    pub fn from_injections<'a>(
        injections: impl IntoIterator<Item = &'a [usize]>,
        g: &SparseGraph,
    ) -> Result<Self> {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        let mut attacks = 0usize;
        for list in injections {
            attacks += 1;
            for &v in list {
                g.check_node(v)?;
                *counts.entry(v).or_default() += 1;
            }
        }
        if attacks == 0 {
            return Err(Error::Precondition("census over zero attacks".into()));
        }
        let mut frequencies: Vec<(usize, usize)> = counts.into_iter().collect();
        frequencies.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let total = frequencies.iter().map(|f| f.1).sum();
        let mut degree_histogram = BTreeMap::new();
        for &(v, _) in frequencies.iter().take(CENSUS_HISTOGRAM_TOP) {
            *degree_histogram.entry(g.degree(v)).or_default() += 1;
        }
        Ok(Self {
            frequencies,
            total,
            degree_histogram,
        })
    }

    /// Share of all injections that went to the `k` most frequent nodes.
    pub fn top_k_mass(&self, k: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let top: usize = self.frequencies.iter().take(k).map(|f| f.1).sum();
        top as f64 / self.total as f64
    }

    /// Cumulative mass at ranks 1, 2, ... (the rank-frequency curve).
    pub fn cumulative_mass(&self) -> Vec<f64> {
        let mut acc = 0usize;
        self.frequencies
            .iter()
            .map(|f| {
                acc += f.1;
                acc as f64 / self.total.max(1) as f64
            })
            .collect()
    }

    /// Fraction of histogrammed attacker nodes with degree at most `max_degree`.
    pub fn low_degree_fraction(&self, max_degree: usize) -> f64 {
        let all: usize = self.degree_histogram.values().sum();
        if all == 0 {
            return 0.0;
        }
        let low: usize = self.degree_histogram.range(..=max_degree).map(|(_, c)| c).sum();
        low as f64 / all as f64
    }

    /// Distinct attacker nodes, most frequent first.
    pub fn attacker_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.frequencies.iter().map(|f| f.0)
    }
}

/// Frequency census of attacker nodes over `results`.
pub fn attack_census(results: &[AttackResult], g: &SparseGraph) -> Result<CensusReport> {
    CensusReport::from_injections(results.iter().map(|r| r.injected.as_slice()), g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::path;

    #[test]
    fn single_injection() {
        let g = path(4);
        let c = CensusReport::from_injections([&[3usize][..]], &g).unwrap();
        assert_eq!(c.frequencies, vec![(3, 1)]);
        assert_eq!(c.top_k_mass(1), 1.0);
        assert_eq!(c.degree_histogram, BTreeMap::from([(1, 1)]));
        assert_eq!(c.low_degree_fraction(2), 1.0);
    }

    #[test]
    fn ranking_and_mass() {
        let g = path(5);
        let lists: Vec<Vec<usize>> = vec![vec![4, 0], vec![4], vec![2, 4], vec![]];
        let c = CensusReport::from_injections(lists.iter().map(|l| l.as_slice()), &g).unwrap();
        assert_eq!(c.frequencies, vec![(4, 3), (0, 1), (2, 1)]);
        assert_eq!(c.total, 5);
        assert!((c.top_k_mass(1) - 0.6).abs() < 1e-12);
        assert_eq!(c.cumulative_mass().last().copied(), Some(1.0));
        // degrees: 4 -> 1, 0 -> 1, 2 -> 2
        assert_eq!(c.degree_histogram, BTreeMap::from([(1, 2), (2, 1)]));
        assert!((c.low_degree_fraction(1) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_census_is_an_error() {
        let g = path(2);
        assert!(CensusReport::from_injections(std::iter::empty::<&[usize]>(), &g).is_err());
    }
}
