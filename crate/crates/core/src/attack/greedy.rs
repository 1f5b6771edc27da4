use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gradient::{closed_form_gradient, target_loss, target_probabilities};
use crate::error::{Error, Result};
use crate::graph::{EdgeFlip, FlipOp, SparseGraph};
use crate::models::{argmax, LinearSurrogate};

/// How many gradient-ranked flips are tried per round before giving up on
/// finding one that does not lower the surrogate loss.
const MAX_TRIES_PER_ROUND: usize = 32;

/// Direct-attack budget for one target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackBudget {
    pub target: usize,
    pub delta: usize,
    pub allow_removal: bool,
}

impl AttackBudget {
    /// Edge-injection budget of `delta` flips.
    pub fn new(target: usize, delta: usize) -> Self {
        Self {
            target,
            delta,
            allow_removal: false,
        }
    }

    /// Budget equal to the target's degree (at least one flip).
    pub fn degree_budget(g: &SparseGraph, target: usize) -> Self {
        Self::new(target, g.degree(target).max(1))
    }

    pub fn with_removals(mut self) -> Self {
        self.allow_removal = true;
        self
    }

    fn validate(&self, g: &SparseGraph) -> Result<()> {
        g.check_node(self.target)?;
        if g.label(self.target).is_none() {
            return Err(Error::Precondition(format!(
                "attack target {} is unlabeled",
                self.target
            )));
        }
        Ok(())
    }
}

/// Outcome of one targeted attack.
#[derive(Clone, Debug)]
pub struct AttackResult {
    pub target: usize,
    /// Far endpoints of injected edges, in the order they were added.
    pub injected: Vec<usize>,
    /// Far endpoints of removed edges.
    pub removed: Vec<usize>,
    pub perturbed: SparseGraph,
    /// Surrogate prediction and probability of the true class, before and after.
    pub pre_class: usize,
    pub post_class: usize,
    pub pre_prob: f64,
    pub post_prob: f64,
    /// Surrogate target loss after each accepted flip, starting with the clean loss.
    pub loss_trace: Vec<f64>,
}

impl AttackResult {
    pub fn num_perturbations(&self) -> usize {
        self.injected.len() + self.removed.len()
    }

    /// The edits that turn the input graph into `perturbed`.
    pub fn flips(&self) -> Vec<EdgeFlip> {
        self.injected
            .iter()
            .map(|&v| EdgeFlip::add(self.target, v))
            .chain(self.removed.iter().map(|&v| EdgeFlip::remove(self.target, v)))
            .collect()
    }

    pub fn record(&self) -> AttackRecord {
        AttackRecord {
            target: self.target,
            injected: self.injected.clone(),
            removed: self.removed.clone(),
            pre_class: self.pre_class,
            post_class: self.post_class,
            pre_prob: self.pre_prob,
            post_prob: self.post_prob,
        }
    }
}

/// One line of `attacks.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub target: usize,
    pub injected: Vec<usize>,
    pub removed: Vec<usize>,
    pub pre_class: usize,
    pub post_class: usize,
    pub pre_prob: f64,
    pub post_prob: f64,
}

impl AttackRecord {
    pub fn flips(&self) -> Vec<EdgeFlip> {
        self.injected
            .iter()
            .map(|&v| EdgeFlip::add(self.target, v))
            .chain(self.removed.iter().map(|&v| EdgeFlip::remove(self.target, v)))
            .collect()
    }
}

/// Sequential worst-case flips on the surrogate.
///
/// Each round recomputes the closed-form gradient on the current graph and
/// ranks the allowed flips by gradient magnitude: additions with positive
/// gradient and, when enabled, removals of incident edges with negative
/// gradient. The highest-ranked flip that does not lower the surrogate loss
/// is applied. The attack stops early when no such flip exists.
pub fn greedy_attack(
    surrogate: &LinearSurrogate,
    g: &SparseGraph,
    budget: &AttackBudget,
) -> Result<AttackResult> {
    budget.validate(g)?;
    let u = budget.target;
    let y = g.label(u).expect("validated");
    let clean_probs = target_probabilities(surrogate, g, u)?;

    let mut current = g.clone();
    let mut injected: Vec<usize> = Vec::new();
    let mut removed: Vec<usize> = Vec::new();
    let mut loss = target_loss(surrogate, &current, u)?;
    let mut loss_trace = vec![loss];

    for _ in 0..budget.delta {
        let grad = closed_form_gradient(surrogate, &current, u)?;
        let mut options: Vec<(f64, EdgeFlip)> = grad
            .candidates
            .iter()
            .filter(|&&(v, gv)| gv > 0.0 && !removed.contains(&v))
            .map(|&(v, gv)| (gv, EdgeFlip::add(u, v)))
            .collect();
        if budget.allow_removal {
            options.extend(
                grad.existing
                    .iter()
                    .filter(|&&(v, gv)| gv < 0.0 && !injected.contains(&v))
                    .map(|&(v, gv)| (-gv, EdgeFlip::remove(u, v))),
            );
        }
        options.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.v.cmp(&b.1.v)));

        let mut accepted = None;
        for &(_, flip) in options.iter().take(MAX_TRIES_PER_ROUND) {
            let next = current.flip_edges(&[flip])?;
            let next_loss = target_loss(surrogate, &next, u)?;
            if next_loss >= loss {
                accepted = Some((flip, next, next_loss));
                break;
            }
        }
        let Some((flip, next, next_loss)) = accepted else {
            log::debug!("attack on {u} stopped after {} flips", injected.len() + removed.len());
            break;
        };
        match flip.op {
            FlipOp::Add => injected.push(flip.v),
            FlipOp::Remove => removed.push(flip.v),
        }
        current = next;
        loss = next_loss;
        loss_trace.push(loss);
    }

    let post_probs = target_probabilities(surrogate, &current, u)?;
    Ok(AttackResult {
        target: u,
        injected,
        removed,
        perturbed: current,
        pre_class: argmax(clean_probs.view()),
        post_class: argmax(post_probs.view()),
        pre_prob: clean_probs[y],
        post_prob: post_probs[y],
        loss_trace,
    })
}

/// Attacks every target independently with a degree-sized budget, in
/// parallel; results are in target order.
pub fn attack_targets(
    surrogate: &LinearSurrogate,
    g: &SparseGraph,
    targets: &[usize],
    allow_removal: bool,
) -> Result<Vec<AttackResult>> {
    targets
        .par_iter()
        .map(|&u| {
            let mut budget = AttackBudget::degree_budget(g, u);
            budget.allow_removal = allow_removal;
            greedy_attack(surrogate, g, &budget)
        })
        .collect()
}
