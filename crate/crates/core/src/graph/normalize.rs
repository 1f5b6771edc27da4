use ndarray::{Array2, ArrayView2};

use super::SparseGraph;
use crate::error::{Error, Result};

/// Symmetrically normalized adjacency with self-loops,
/// `D̃^{-1/2} (A + I) D̃^{-1/2}`, in CSR form.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedOperator {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// Builds the GCN propagation operator for `g`.
///
/// Row `u` holds `degree(u) + 1` entries: the neighbors plus the diagonal.
/// Entry `(i, j)` is `1 / sqrt((d_i + 1)(d_j + 1))`.
pub fn normalized_operator(g: &SparseGraph) -> NormalizedOperator {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| 1.0 / ((d + 1) as f64).sqrt())
        .collect();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(2 * g.num_edges() + n);
    let mut values = Vec::with_capacity(2 * g.num_edges() + n);
    indptr.push(0);
    for u in 0..n {
        let row = g.neighbors(u);
        let split = row.partition_point(|&v| v < u);
        let cols = row[..split]
            .iter()
            .copied()
            .chain(std::iter::once(u))
            .chain(row[split..].iter().copied());
        for v in cols {
            indices.push(v);
            values.push(inv_sqrt[u] * inv_sqrt[v]);
        }
        indptr.push(indices.len());
    }
    NormalizedOperator {
        indptr,
        indices,
        values,
    }
}

impl NormalizedOperator {
    pub fn num_nodes(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[range.clone()], &self.values[range])
    }

    /// Entry `(i, j)`, zero when structurally absent.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    /// Sparse-dense product `Â · x`.
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "operator has {} rows, input has {}",
                self.num_nodes(),
                x.nrows()
            )));
        }
        let mut out = Array2::zeros((x.nrows(), x.ncols()));
        for (i, mut out_row) in out.outer_iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                out_row.scaled_add(a, &x.row(j));
            }
        }
        Ok(out)
    }

    /// `Â^hops · x`.
    pub fn propagate(&self, x: ArrayView2<'_, f64>, hops: usize) -> Result<Array2<f64>> {
        let mut h = x.to_owned();
        if h.nrows() != self.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "operator has {} rows, input has {}",
                self.num_nodes(),
                h.nrows()
            )));
        }
        for _ in 0..hops {
            h = self.apply(h.view())?;
        }
        Ok(h)
    }

    /// Dense copy, for small fixtures and oracles.
    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.num_nodes();
        let mut dense = Array2::zeros((n, n));
        for i in 0..n {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                dense[[i, j]] = a;
            }
        }
        dense
    }
}
