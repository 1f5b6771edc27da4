use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::graph::{normalized_operator, SparseGraph};
use crate::models::{cross_entropy, local_propagate, softmax, LinearSurrogate};

/// Gradient of the surrogate's target loss `-ln Z[u, y_u]` with respect to
/// every symmetric edge weight `A[u, v] = A[v, u]`.
#[derive(Clone, Debug)]
pub struct EdgeGradient {
    pub target: usize,
    /// `(v, g[u, v])` for every non-neighbor `v != u`, ascending `v`.
    pub candidates: Vec<(usize, f64)>,
    /// `(v, g[u, v])` for every current neighbor of `u`.
    pub existing: Vec<(usize, f64)>,
    /// Direct term `∂L/∂Â[u, v] + ∂L/∂Â[v, u]` for every node; with one
    /// propagation layer this is `Σ_c Z[u, c] 𝒲[v, c] - 𝒲[v, y_u]`.
    pub direct: Vec<f64>,
    /// Target loss on the graph the gradient was taken at.
    pub loss: f64,
}

impl EdgeGradient {
    /// Candidate with the largest positive gradient; smallest index on ties.
    pub fn best_addition(&self) -> Option<(usize, f64)> {
        best_by(&self.candidates, |g| g)
    }

    /// Neighbor whose removal raises the loss fastest (most negative gradient).
    pub fn best_removal(&self) -> Option<(usize, f64)> {
        best_by(&self.existing, |g| -g)
    }

    /// Non-neighbors sorted by decreasing gradient, ties by ascending index.
    pub fn ranked_candidates(&self) -> Vec<(usize, f64)> {
        let mut ranked = self.candidates.clone();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }
}

fn best_by(entries: &[(usize, f64)], key: impl Fn(f64) -> f64) -> Option<(usize, f64)> {
    entries
        .iter()
        .copied()
        .filter(|&(_, g)| key(g) > 0.0)
        .fold(None, |best: Option<(usize, f64)>, cur| match best {
            Some(b) if key(b.1) >= key(cur.1) => Some(b),
            _ => Some(cur),
        })
}

fn check_surrogate(surrogate: &LinearSurrogate, g: &SparseGraph, u: usize) -> Result<usize> {
    if surrogate.collapsed().nrows() != g.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "surrogate was fitted on {} nodes, graph has {}",
            surrogate.collapsed().nrows(),
            g.num_nodes()
        )));
    }
    g.check_node(u)?;
    g.label(u)
        .ok_or_else(|| Error::Precondition(format!("target {u} is unlabeled")))
}

fn dot(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.dot(&b)
}

/// Analytic edge gradient of the linear surrogate for target `u`.
///
/// With `H = Â^l 𝒲` and `G = ∂L/∂H` (non-zero only in row `u`), the loss
/// gradient w.r.t. `Â` is `Σ_m Â^m G (Â^{l-1-m} 𝒲)ᵀ`. Writing `B_m = Â^m G`
/// and `Q_j = Â^j 𝒲`, the derivative along the symmetric edge `(u, v)` is
///
/// ```text
/// g[u,v] = (P[u,v] + P[v,u]) / sqrt(d̃_u d̃_v) - S_u / (2 d̃_u) - S_v / (2 d̃_v)
/// P[i,j] = Σ_m B_m[i] · Q_{l-1-m}[j]
/// S_x    = Σ_m B_m[x] · Q_{l-m}[x] + Q_{l-1-m}[x] · B_{m+1}[x]
/// ```
///
/// where `d̃ = d + 1`. `S_x` collects the effect of `d̃_x` on every entry of
/// row and column `x` of `Â`. For one layer and a non-neighbor `v`, `S_v`
/// vanishes and the ranking reduces to `P[u,v] / sqrt(d̃_v)`.
pub fn closed_form_gradient(
    surrogate: &LinearSurrogate,
    g: &SparseGraph,
    u: usize,
) -> Result<EdgeGradient> {
    let y = check_surrogate(surrogate, g, u)?;
    let n = g.num_nodes();
    let layers = surrogate.num_layers();
    let op = normalized_operator(g);

    let mut q: Vec<Array2<f64>> = vec![surrogate.collapsed().clone()];
    for j in 1..=layers {
        q.push(op.apply(q[j - 1].view())?);
    }
    let logits = q[layers].row(u);
    let loss = cross_entropy(logits, y);
    let mut grad_u: Array1<f64> = softmax(logits);
    grad_u[y] -= 1.0;

    let mut b: Vec<Array2<f64>> = vec![Array2::zeros(q[0].raw_dim())];
    b[0].row_mut(u).assign(&grad_u);
    for m in 1..=layers {
        b.push(op.apply(b[m - 1].view())?);
    }

    let degree_term = |x: usize| -> f64 {
        (0..layers)
            .map(|m| {
                dot(b[m].row(x), q[layers - m].row(x))
                    + dot(q[layers - 1 - m].row(x), b[m + 1].row(x))
            })
            .sum()
    };
    let s_u = degree_term(u);
    let dt_u = (g.degree(u) + 1) as f64;

    let mut direct = vec![0.0; n];
    let mut candidates = Vec::with_capacity(n.saturating_sub(g.degree(u) + 1));
    let mut existing = Vec::with_capacity(g.degree(u));
    for v in 0..n {
        if v == u {
            continue;
        }
        let p: f64 = (0..layers)
            .map(|m| {
                dot(b[m].row(u), q[layers - 1 - m].row(v)) + dot(b[m].row(v), q[layers - 1 - m].row(u))
            })
            .sum();
        direct[v] = p;
        let dt_v = (g.degree(v) + 1) as f64;
        let value = p / (dt_u * dt_v).sqrt() - s_u / (2.0 * dt_u) - degree_term(v) / (2.0 * dt_v);
        if g.has_edge(u, v) {
            existing.push((v, value));
        } else {
            candidates.push((v, value));
        }
    }
    Ok(EdgeGradient {
        target: u,
        candidates,
        existing,
        direct,
        loss,
    })
}

/// Surrogate loss `-ln Z[u, y_u]` on `g`, evaluated locally around `u`.
pub fn target_loss(surrogate: &LinearSurrogate, g: &SparseGraph, u: usize) -> Result<f64> {
    let y = check_surrogate(surrogate, g, u)?;
    let logits = local_propagate(g, u, surrogate.num_layers(), &mut |j| {
        surrogate.collapsed().row(j).to_owned()
    });
    Ok(cross_entropy(logits.view(), y))
}

/// Surrogate probabilities of node `u` on `g`.
pub fn target_probabilities(surrogate: &LinearSurrogate, g: &SparseGraph, u: usize) -> Result<Array1<f64>> {
    check_surrogate(surrogate, g, u)?;
    let logits = local_propagate(g, u, surrogate.num_layers(), &mut |j| {
        surrogate.collapsed().row(j).to_owned()
    });
    Ok(softmax(logits.view()))
}

/// Central finite difference of the target loss along the symmetric edge
/// `(u, v)`: `[L(A + εE) - L(A - εE)] / 2ε`.
///
/// The perturbed adjacency is real-valued; degrees and the normalized
/// operator are rebuilt from it for each evaluation. Works for both absent
/// and present edges.
pub fn finite_difference_gradient(
    surrogate: &LinearSurrogate,
    g: &SparseGraph,
    u: usize,
    v: usize,
    epsilon: f64,
) -> Result<f64> {
    let y = check_surrogate(surrogate, g, u)?;
    g.check_node(v)?;
    if u == v {
        return Err(Error::Precondition("finite difference on a self-loop".into()));
    }
    if !(epsilon > 0.0 && epsilon <= 0.1) {
        return Err(Error::Precondition(format!("epsilon {epsilon} outside (0, 0.1]")));
    }
    let plus = perturbed_loss(surrogate, g, u, (u, v), epsilon, y);
    let minus = perturbed_loss(surrogate, g, u, (u, v), -epsilon, y);
    let numerator = plus - minus;
    if numerator.abs() < 1e-12 {
        log::warn!(
            "finite difference for ({u}, {v}) has |numerator| {:.3e}; result may be dominated by cancellation",
            numerator.abs()
        );
    }
    Ok(numerator / (2.0 * epsilon))
}

/// Target loss with `delta` added to both `Ã[a, b]` and `Ã[b, a]`.
fn perturbed_loss(
    surrogate: &LinearSurrogate,
    g: &SparseGraph,
    target: usize,
    (a, b): (usize, usize),
    delta: f64,
    y: usize,
) -> f64 {
    let n = g.num_nodes();
    // weighted Ã = A + I + δ(E_uv + E_vu)
    let mut rows: Vec<BTreeMap<usize, f64>> = (0..n)
        .map(|i| {
            let mut row: BTreeMap<usize, f64> = g.neighbors(i).iter().map(|&j| (j, 1.0)).collect();
            row.insert(i, 1.0);
            row
        })
        .collect();
    *rows[a].entry(b).or_insert(0.0) += delta;
    *rows[b].entry(a).or_insert(0.0) += delta;
    let degree: Vec<f64> = rows.iter().map(|r| r.values().sum()).collect();

    let mut h = surrogate.collapsed().clone();
    for _ in 0..surrogate.num_layers() {
        let mut next = Array2::zeros(h.raw_dim());
        for (i, row) in rows.iter().enumerate() {
            let mut out = next.row_mut(i);
            for (&j, &w) in row {
                out.scaled_add(w / (degree[i] * degree[j]).sqrt(), &h.row(j));
            }
        }
        h = next;
    }
    cross_entropy(h.row(target), y)
}
