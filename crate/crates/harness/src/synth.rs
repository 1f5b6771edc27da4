//! Seeded synthetic graph generators.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use guard_core::graph::SparseGraph;
use guard_core::Result;

/// Erdős–Rényi graph with noisy class-prototype features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErdosRenyiSpec {
    pub num_nodes: usize,
    pub p: f64,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    #[serde(default = "default_er_features")]
    pub num_features: usize,
    /// Standard deviation of the Gaussian feature noise.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Stochastic block model: one class per block, features are the block
/// indicator scaled by `separation` plus Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Degree-corrected, homophilous citation-style graph with sparse binary
/// bag-of-words features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoraLikeSpec {
    pub num_nodes: usize,
    /// Relative class sizes.
    pub class_weights: Vec<f64>,
    pub num_features: usize,
    pub mean_degree: f64,
    /// Tail exponent of the Pareto expected-degree distribution.
    pub degree_exponent: f64,
    /// Probability that an edge stays inside its source node's class.
    pub homophily: f64,
    pub words_per_node: usize,
    /// Probability that a word is drawn from the node's class topic.
    pub topic_fraction: f64,
    /// Zipf exponent of word popularity inside a topic.
    pub word_zipf: f64,
    pub seed: u64,
}

impl Default for CoraLikeSpec {
    fn default() -> Self {
        Self {
            num_nodes: 2485,
            class_weights: vec![351.0, 217.0, 418.0, 818.0, 426.0, 298.0, 180.0],
            num_features: 1433,
            mean_degree: 4.1,
            degree_exponent: 3.1,
            homophily: 0.81,
            words_per_node: 18,
            topic_fraction: 0.4,
            word_zipf: 1.2,
            seed: 0,
        }
    }
}

fn default_classes() -> usize {
    3
}

fn default_er_features() -> usize {
    8
}

fn default_noise() -> f64 {
    0.4
}

fn default_separation() -> f64 {
    1.0
}

/// Pairs `(u, v)`, `u < v`, each present independently with probability `p`.
/// Uses geometric skips, so the cost is proportional to the edge count.
pub fn bernoulli_pairs(n: usize, p: f64, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    if p <= 0.0 || n < 2 {
        return edges;
    }
    if p >= 1.0 {
        for u in 0..n {
            edges.extend((u + 1..n).map(|v| (u, v)));
        }
        return edges;
    }
    let log_q = (1.0 - p).ln();
    // Batagelj–Brandes walk over the strict upper triangle, row by row
    let (mut v, mut w) = (1usize, -1i64);
    while v < n {
        let r: f64 = rng.random();
        w += 1 + ((1.0 - r).ln() / log_q).floor() as i64;
        while w >= v as i64 && v < n {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            edges.push((w as usize, v));
        }
    }
    edges
}

fn prototype_features(
    labels: &[usize],
    dim: usize,
    classes: usize,
    scale: f64,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    Array2::from_shape_fn((labels.len(), dim), |(i, j)| {
        let signal = if j % classes == labels[i] { scale } else { 0.0 };
        if noise > 0.0 {
            signal + normal.sample(rng)
        } else {
            signal
        }
    })
}

pub fn erdos_renyi(spec: &ErdosRenyiSpec) -> Result<SparseGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_nodes;
    let edges = bernoulli_pairs(n, spec.p, &mut rng);
    let classes = spec.num_classes.max(1);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let x = prototype_features(&labels, spec.num_features.max(classes), classes, 1.0, spec.noise, &mut rng);
    SparseGraph::new(n, edges, x, labels.into_iter().map(Some).collect())?.with_num_classes(classes)
}

pub fn stochastic_block(spec: &SbmSpec) -> Result<SparseGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<usize> = spec
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &size)| std::iter::repeat_n(c, size))
        .collect();
    let n = labels.len();
    let classes = spec.block_sizes.len().max(1);
    let mut edges = Vec::new();
    for (a, b) in bernoulli_pairs(n, spec.p_in.max(spec.p_out), &mut rng) {
        let p = if labels[a] == labels[b] { spec.p_in } else { spec.p_out };
        // thin the denser process down to the pair's own probability
        if rng.random::<f64>() * spec.p_in.max(spec.p_out) < p {
            edges.push((a, b));
        }
    }
    let x = prototype_features(&labels, classes, classes, spec.separation, spec.noise, &mut rng);
    SparseGraph::new(n, edges, x, labels.into_iter().map(Some).collect())?.with_num_classes(classes)
}

/// Draws indices proportionally to non-negative weights.
struct Sampler {
    cumulative: Vec<f64>,
    items: Vec<usize>,
}

impl Sampler {
    fn new(items: Vec<usize>, weight: impl Fn(usize) -> f64) -> Self {
        let mut acc = 0.0;
        let cumulative = items
            .iter()
            .map(|&i| {
                acc += weight(i);
                acc
            })
            .collect();
        Self { cumulative, items }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty sampler");
        let r = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= r).min(self.items.len() - 1);
        self.items[i]
    }
}

pub fn cora_like(spec: &CoraLikeSpec) -> Result<SparseGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_nodes;
    let classes = spec.class_weights.len().max(1);
    let class_sampler = Sampler::new((0..classes).collect(), |c| spec.class_weights.get(c).copied().unwrap_or(1.0));
    let labels: Vec<usize> = (0..n).map(|_| class_sampler.draw(&mut rng)).collect();

    // expected degrees: Pareto tail, rescaled to the requested mean
    let shape = (spec.degree_exponent - 1.0).max(1.05);
    let mut theta: Vec<f64> = (0..n)
        .map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / shape).min(n as f64 / 10.0))
        .collect();
    let mean: f64 = theta.iter().sum::<f64>() / n.max(1) as f64;
    for t in &mut theta {
        *t *= spec.mean_degree / mean;
    }

    let all = Sampler::new((0..n).collect(), |i| theta[i]);
    let within: Vec<Sampler> = (0..classes)
        .map(|c| Sampler::new((0..n).filter(|&i| labels[i] == c).collect(), |i| theta[i]))
        .collect();
    let pick_partner = |u: usize, rng: &mut ChaCha8Rng| -> usize {
        let c = labels[u];
        if !within[c].items.is_empty() && rng.random::<f64>() < spec.homophily {
            within[c].draw(rng)
        } else {
            loop {
                let v = all.draw(rng);
                if labels[v] != c || within[c].items.len() == n {
                    return v;
                }
            }
        }
    };

    let mut edges = std::collections::BTreeSet::new();
    let target_edges = (spec.mean_degree * n as f64 / 2.0).round() as usize;
    let mut degree = vec![0usize; n];
    let mut attempts = 0;
    while edges.len() < target_edges && attempts < 50 * target_edges.max(1) {
        attempts += 1;
        let u = all.draw(&mut rng);
        let v = pick_partner(u, &mut rng);
        if u != v && edges.insert((u.min(v), u.max(v))) {
            degree[u] += 1;
            degree[v] += 1;
        }
    }
    // connect isolated nodes
    for u in 0..n {
        if degree[u] == 0 && n > 1 {
            let v = loop {
                let v = pick_partner(u, &mut rng);
                if v != u {
                    break v;
                }
            };
            edges.insert((u.min(v), u.max(v)));
            degree[u] += 1;
            degree[v] += 1;
        }
    }

    let f = spec.num_features.max(classes);
    let topic = f / classes;
    let topic_words = Sampler::new((0..topic).collect(), |r| ((r + 1) as f64).powf(-spec.word_zipf));
    let mut x = Array2::zeros((n, f));
    for u in 0..n {
        let words = ((spec.words_per_node as f64) * rng.random_range(0.5..1.5)).round().max(1.0) as usize;
        for _ in 0..words {
            let j = if rng.random::<f64>() < spec.topic_fraction {
                labels[u] * topic + topic_words.draw(&mut rng)
            } else {
                rng.random_range(0..f)
            };
            x[[u, j]] = 1.0;
        }
    }
    SparseGraph::new(n, edges, x, labels.into_iter().map(Some).collect())?.with_num_classes(classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_pairs_are_distinct_and_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let edges = bernoulli_pairs(300, 0.05, &mut rng);
        assert!(edges.iter().all(|&(u, v)| u < v && v < 300));
        let mut sorted = edges.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), edges.len());
        let expected = 0.05 * 300.0 * 299.0 / 2.0;
        assert!((edges.len() as f64 - expected).abs() < 0.1 * expected);
        assert_eq!(bernoulli_pairs(4, 1.0, &mut rng).len(), 6);
        assert!(bernoulli_pairs(4, 0.0, &mut rng).is_empty());
    }

    #[test]
    fn generators_are_seeded() {
        let spec = ErdosRenyiSpec {
            num_nodes: 50,
            p: 0.1,
            num_classes: 3,
            num_features: 6,
            noise: 0.4,
            seed: 3,
        };
        assert_eq!(erdos_renyi(&spec).unwrap(), erdos_renyi(&spec).unwrap());
        let cora = CoraLikeSpec {
            num_nodes: 300,
            num_features: 140,
            ..Default::default()
        };
        let g = cora_like(&cora).unwrap();
        assert_eq!(g, cora_like(&cora).unwrap());
        assert!(g.degrees().iter().all(|&d| d >= 1));
        assert!(g.features().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(g.num_classes(), 7);
    }

    #[test]
    fn disjoint_blocks_have_no_cross_edges() {
        let spec = SbmSpec {
            block_sizes: vec![20, 30, 25],
            p_in: 0.2,
            p_out: 0.0,
            separation: 1.0,
            noise: 0.0,
            seed: 9,
        };
        let g = stochastic_block(&spec).unwrap();
        assert_eq!(g.num_nodes(), 75);
        for (u, v) in g.edges() {
            assert_eq!(g.label(u), g.label(v));
        }
        assert_eq!(g.features()[[25, 1]], 1.0);
    }

    #[test]
    fn cora_like_default_statistics() {
        let g = cora_like(&CoraLikeSpec::default()).unwrap();
        assert_eq!((g.num_nodes(), g.num_features(), g.num_classes()), (2485, 1433, 7));
        let n = g.num_nodes() as f64;
        let mean_degree = 2.0 * g.num_edges() as f64 / n;
        assert!((3.5..4.8).contains(&mean_degree), "{mean_degree}");
        let low = g.degrees().iter().filter(|&&d| d <= 2).count() as f64 / n;
        assert!((0.3..0.45).contains(&low), "{low}");
        let same = g.edges().filter(|&(u, v)| g.label(u) == g.label(v)).count();
        assert!(same as f64 / g.num_edges() as f64 > 0.7);
    }
}
