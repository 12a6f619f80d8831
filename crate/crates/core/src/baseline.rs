//! Linear average consensus with a doubly-stochastic mixing matrix.
//!
//! Each round every node replaces its frequency and phase by a weighted
//! average of its own and its neighbors' observed values, `x <- W x`. With
//! Metropolis weights `W` is symmetric, nonnegative, has the sparsity of the
//! graph and needs only the degrees of the two endpoints of each edge.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::NetworkTopology;

#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    entries: DMatrix<f64>,
    /// Nonzero entries per row as `(column, weight)`, diagonal included.
    rows: Vec<Vec<(usize, f64)>>,
}

/// `W[m][n] = 1 / (1 + max(d_m, d_n))` on edges, rows completed on the
/// diagonal.
pub fn metropolis_weights(topology: &NetworkTopology) -> MixingMatrix {
    let n = topology.n_nodes();
    let degrees = topology.degrees();
    let mut entries = DMatrix::zeros(n, n);
    for &(a, b) in topology.edges() {
        let w = 1.0 / (1.0 + degrees[a].max(degrees[b]) as f64);
        entries[(a, b)] = w;
        entries[(b, a)] = w;
    }
    for i in 0..n {
        let off: f64 = topology.adj(i).iter().map(|&j| entries[(i, j)]).sum();
        entries[(i, i)] = 1.0 - off;
    }
    let rows = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = std::iter::once(i)
                .chain(topology.adj(i).iter().copied())
                .map(|j| (j, entries[(i, j)]))
                .collect();
            row.sort_unstable_by_key(|&(j, _)| j);
            row
        })
        .collect();
    MixingMatrix { entries, rows }
}

impl MixingMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n_nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.row_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.entries.column_iter().map(|c| c.sum()).collect()
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        let ok = |s: f64| (s - 1.0).abs() <= tol;
        self.row_sums().into_iter().all(ok)
            && self.col_sums().into_iter().all(ok)
            && self.entries.iter().all(|&w| w >= 0.0)
    }

    /// Nonzeros only on the diagonal and on edges of `topology`.
    pub fn respects(&self, topology: &NetworkTopology) -> bool {
        let n = self.n_nodes();
        (0..n).all(|i| {
            (0..n).all(|j| i == j || self.entries[(i, j)] == 0.0 || topology.has_edge(i, j))
        })
    }

    /// Largest eigenvalue modulus other than the unit eigenvalue of the
    /// all-ones vector. Governs the geometric rate of linear consensus.
    pub fn second_largest_modulus(&self) -> f64 {
        let mut moduli: Vec<f64> = SymmetricEigen::new(self.entries.clone())
            .eigenvalues
            .iter()
            .map(|l| l.abs())
            .collect();
        moduli.sort_unstable_by(|a, b| b.total_cmp(a));
        moduli.get(1).copied().unwrap_or(0.0)
    }

    /// `W x` using the sparse rows.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: self.n_nodes(),
                found: x.len(),
            });
        }
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * x[j]).sum())
            .collect())
    }
}

/// One mixing round applied to observed frequencies and phases.
pub fn dfpc_step(
    freqs: &[f64],
    phases: &[f64],
    mix: &MixingMatrix,
) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((mix.apply(freqs)?, mix.apply(phases)?))
}
