//! Surrogate-gradient targeted edge attacks and attacker-node censuses.

mod census;
mod gradient;
mod greedy;

pub use census::{attack_census, CensusReport, CENSUS_HISTOGRAM_TOP};
pub use gradient::{
    closed_form_gradient, finite_difference_gradient, target_loss, target_probabilities,
    EdgeGradient,
};
pub use greedy::{attack_targets, greedy_attack, AttackBudget, AttackRecord, AttackResult};

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};

    use super::*;
    use crate::graph::SparseGraph;
    use crate::models::{FeatureScaling, LinearSurrogate, TrainingConfig};
    use crate::testutil::{random_graph, surrogate};

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn closed_form_matches_finite_differences() {
        for layers in [1, 2, 3] {
            let (g, s) = random_graph(30, 0.12, 3, 6, 11);
            let m = surrogate(&g, &s, layers);
            for u in [0, 7, 19] {
                let grad = closed_form_gradient(&m, &g, u).unwrap();
                for &(v, gv) in grad.candidates.iter().chain(&grad.existing) {
                    let fd = finite_difference_gradient(&m, &g, u, v, 1e-4).unwrap();
                    assert!(rel_err(gv, fd) < 1e-5, "l={layers} u={u} v={v}: {gv} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn argmax_and_top3_agree_with_the_oracle() {
        for seed in 0..4 {
            let (g, s) = random_graph(50, 0.1, 3, 8, seed);
            let m = surrogate(&g, &s, 2);
            for u in 0..50 {
                let ranked = closed_form_gradient(&m, &g, u).unwrap().ranked_candidates();
                let mut oracle: Vec<(usize, f64)> = ranked
                    .iter()
                    .map(|&(v, _)| (v, finite_difference_gradient(&m, &g, u, v, 1e-4).unwrap()))
                    .collect();
                oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                let top = |r: &[(usize, f64)]| r.iter().take(3).map(|x| x.0).collect::<Vec<_>>();
                assert_eq!(top(&ranked), top(&oracle), "seed {seed} target {u}");
            }
        }
    }

    #[test]
    fn finite_difference_is_step_stable_and_symmetric() {
        let (g, s) = random_graph(25, 0.15, 2, 4, 3);
        let m = surrogate(&g, &s, 2);
        let u = 4;
        for &(v, _) in closed_form_gradient(&m, &g, u).unwrap().candidates.iter().take(8) {
            let a = finite_difference_gradient(&m, &g, u, v, 1e-4).unwrap();
            let b = finite_difference_gradient(&m, &g, u, v, 1e-5).unwrap();
            assert!(rel_err(a, b) < 1e-3);
        }
        assert!(finite_difference_gradient(&m, &g, u, u, 1e-4).is_err());
        assert!(finite_difference_gradient(&m, &g, u, 1, 0.5).is_err());
    }

    /// One-hot features, identity weights: `𝒲` rows are the features.
    fn handmade(edges: Vec<(usize, usize)>, x: Array2<f64>, labels: Vec<Option<usize>>, layers: usize) -> (SparseGraph, LinearSurrogate) {
        let n = x.nrows();
        let g = SparseGraph::new(n, edges, x, labels).unwrap();
        let m = LinearSurrogate::from_weights(
            Array2::eye(g.num_features()),
            layers,
            FeatureScaling::Identity,
            TrainingConfig::default(),
            &g,
        )
        .unwrap();
        (g, m)
    }

    #[test]
    fn k2_plus_isolated_node_has_one_candidate() {
        let (g, m) = handmade(
            vec![(0, 1)],
            array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![Some(0), Some(0), Some(1)],
            2,
        );
        let grad = closed_form_gradient(&m, &g, 0).unwrap();
        assert_eq!(grad.candidates.len(), 1);
        assert_eq!(grad.candidates[0].0, 2);
        assert_eq!(grad.existing.len(), 1);
        // isolated target
        let grad = closed_form_gradient(&m, &g, 2).unwrap();
        assert_eq!(grad.candidates.iter().map(|c| c.0).collect::<Vec<_>>(), vec![0, 1]);
        let fd = finite_difference_gradient(&m, &g, 2, 0, 1e-4).unwrap();
        assert!(rel_err(grad.candidates[0].1, fd) < 1e-6);
    }

    #[test]
    fn lower_degree_twin_gets_the_larger_gradient() {
        // u=0 (class 0) hangs off node 7; twins 1 (degree 1) and 2 (degree 3)
        // carry identical class-1 rows
        let edges = vec![(0, 7), (1, 3), (2, 4), (2, 5), (2, 6)];
        let x = Array2::from_shape_fn((8, 2), |(i, j)| {
            let class1 = i == 1 || i == 2;
            if class1 == (j == 1) { 1.0 } else { 0.0 }
        });
        let (g, m) = handmade(edges, x, vec![Some(0); 8], 1);
        let grad = closed_form_gradient(&m, &g, 0).unwrap();
        assert_eq!(grad.direct[1], grad.direct[2]);
        assert!(grad.direct[1] > 0.0);
        let value = |v: usize| grad.candidates.iter().find(|c| c.0 == v).unwrap().1;
        assert!(value(1) > value(2));
        assert_eq!(grad.best_addition().unwrap().0, 1);
    }

    #[test]
    fn one_layer_ranking_is_direct_term_over_sqrt_degree() {
        let (g, s) = random_graph(40, 0.1, 3, 6, 5);
        let m = surrogate(&g, &s, 1);
        for u in [0, 13, 30] {
            let grad = closed_form_gradient(&m, &g, u).unwrap();
            let z = target_probabilities(&m, &g, u).unwrap();
            let y = g.label(u).unwrap();
            let w = m.collapsed();
            let constant = grad.candidates[0].1
                - grad.direct[grad.candidates[0].0] / ((g.degree(u) + 1) as f64 * (g.degree(grad.candidates[0].0) + 1) as f64).sqrt();
            for &(v, gv) in &grad.candidates {
                let numerator: f64 = (0..3).map(|c| z[c] * w[[v, c]]).sum::<f64>() - w[[v, y]];
                assert!((numerator - grad.direct[v]).abs() < 1e-12);
                let dt = ((g.degree(u) + 1) * (g.degree(v) + 1)) as f64;
                assert!((gv - (numerator / dt.sqrt() + constant)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_budget_leaves_graph_untouched() {
        let (g, s) = random_graph(20, 0.2, 2, 4, 1);
        let m = surrogate(&g, &s, 2);
        let r = greedy_attack(&m, &g, &AttackBudget::new(3, 0)).unwrap();
        assert_eq!(r.perturbed, g);
        assert_eq!(r.num_perturbations(), 0);
        assert_eq!(r.pre_class, r.post_class);
    }

    #[test]
    fn greedy_attack_invariants() {
        for seed in 0..3 {
            let (g, s) = random_graph(40, 0.1, 3, 6, 20 + seed);
            let m = surrogate(&g, &s, 2);
            for u in (0..40).step_by(3) {
                for budget in [
                    AttackBudget::degree_budget(&g, u),
                    AttackBudget::new(u, 4).with_removals(),
                ] {
                    let r = greedy_attack(&m, &g, &budget).unwrap();
                    assert!(r.num_perturbations() <= budget.delta);
                    for &v in &r.injected {
                        assert!(!g.has_edge(u, v));
                        assert!(r.perturbed.has_edge(u, v));
                    }
                    for &v in &r.removed {
                        assert!(g.has_edge(u, v));
                        assert!(!r.perturbed.has_edge(u, v));
                    }
                    assert_eq!(g.flip_edges(&r.flips()).unwrap(), r.perturbed);
                    for w in r.loss_trace.windows(2) {
                        assert!(w[1] >= w[0] - 1e-9);
                    }
                    assert!(r.post_prob <= r.pre_prob + 1e-12);
                    r.perturbed.validate().unwrap();
                }
            }
        }
    }

    #[test]
    fn unlabeled_target_is_rejected() {
        let (g, m) = handmade(
            vec![(0, 1)],
            array![[1.0, 0.0], [0.0, 1.0]],
            vec![None, Some(1)],
            1,
        );
        assert!(closed_form_gradient(&m, &g, 0).is_err());
        assert!(greedy_attack(&m, &g, &AttackBudget::new(0, 1)).is_err());
    }

    #[test]
    fn parallel_attacks_match_sequential() {
        let (g, s) = random_graph(30, 0.1, 3, 6, 9);
        let m = surrogate(&g, &s, 2);
        let targets: Vec<usize> = s.test.clone();
        let par = attack_targets(&m, &g, &targets, false).unwrap();
        for (r, &u) in par.iter().zip(&targets) {
            let seq = greedy_attack(&m, &g, &AttackBudget::degree_budget(&g, u)).unwrap();
            assert_eq!(r.record(), seq.record());
        }
        let census = attack_census(&par, &g).unwrap();
        assert_eq!(census.total, par.iter().map(|r| r.injected.len()).sum::<usize>());
    }
}
