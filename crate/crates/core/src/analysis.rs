//! Closed-form fixed point of message-passing consensus.
//!
//! With node weights `W = diag(w)` and a penalty `gamma` on every edge, the
//! estimates minimize
//!
//! ```text
//! J(x) = sum_n w_n (x_n - z_n)^2 + gamma sum_{(m,n) in E} (x_m - x_n)^2
//! ```
//!
//! whose unique minimizer is `x* = (gamma L + W)^{-1} W z`. As `gamma` grows
//! it approaches the weighted mean of `z` on every node.
//!
//! For large `gamma` the system matrix has condition number of order
//! `gamma lambda_max / w_min`, so a plain factorization loses most digits of
//! the small between-node differences. In that regime the solver splits
//! `x = c 1 + v` with `1'v = 0`: the common value `c` follows from the
//! weighted sum identity `w'x = w'z`, and `v = L^+ W (z - c 1 - v) / gamma`
//! is a contraction with ratio at most `w_max / (lambda_2 gamma)`. `L^+` is
//! applied through the well-conditioned `L + 11'/N`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::NetworkTopology;
use crate::oscillator::{NoiseModel, SimulationParams};

/// Below this contraction ratio the split iteration is used.
const SPLIT_RATIO: f64 = 0.25;
const MAX_SPLIT_ROUNDS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusProblem {
    pub laplacian: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub gamma: f64,
    pub targets: Vec<f64>,
    /// Variance of the per-interval offset error added to every target.
    pub offset_error_var: f64,
}

/// Which observed quantity the targets are.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Frequency,
    Phase,
}

/// Per-interval variance of the offset error entering the targets.
pub fn offset_error_variance(
    noise: &NoiseModel,
    params: &SimulationParams,
    channel: Channel,
) -> f64 {
    match channel {
        Channel::Frequency => noise.sigma_f.powi(2) + noise.sigma_f_meas.powi(2),
        Channel::Phase => {
            (std::f64::consts::PI * params.update_interval * noise.sigma_f).powi(2)
                + noise.sigma_theta_meas.powi(2)
                + noise.sigma_theta.powi(2)
        }
    }
}

impl ConsensusProblem {
    pub fn new(
        topology: &NetworkTopology,
        weights: Vec<f64>,
        gamma: f64,
        targets: Vec<f64>,
    ) -> Result<Self> {
        let problem = Self {
            laplacian: topology.laplacian(),
            weights,
            gamma,
            targets,
            offset_error_var: 0.0,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_offset_error_var(mut self, var: f64) -> Self {
        self.offset_error_var = var;
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.laplacian.nrows();
        if self.laplacian.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.laplacian.ncols(),
            });
        }
        for len in [self.weights.len(), self.targets.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid("gamma", "must be positive and finite"));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("weights", "must be positive and finite"));
        }
        if self.targets.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("targets"));
        }
        if !(self.offset_error_var.is_finite() && self.offset_error_var >= 0.0) {
            return Err(Error::invalid("offset_error_var", "must be non-negative"));
        }
        let l = &self.laplacian;
        for i in 0..n {
            if l.row(i).sum().abs() > 1e-9 * l[(i, i)].abs().max(1.0) {
                return Err(Error::invalid("laplacian", "rows must sum to zero"));
            }
            for j in 0..i {
                if l[(i, j)] != l[(j, i)] {
                    return Err(Error::invalid("laplacian", "must be symmetric"));
                }
            }
        }
        Ok(())
    }

    /// `J(x)` for a candidate consensus vector.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.n_nodes();
        let fit: f64 = (0..n)
            .map(|i| self.weights[i] * (x[i] - self.targets[i]).powi(2))
            .sum();
        let mut smooth = 0.0;
        for i in 0..n {
            for j in 0..i {
                let a = -self.laplacian[(i, j)];
                if a != 0.0 {
                    smooth += a * (x[i] - x[j]).powi(2);
                }
            }
        }
        fit + self.gamma * smooth
    }
}

/// Minimizer of `J`, i.e. `(gamma L + W)^{-1} W z`.
pub fn closed_form_consensus(problem: &ConsensusProblem) -> Result<Vec<f64>> {
    problem.validate()?;
    let n = problem.n_nodes();
    if n == 1 {
        return Ok(problem.targets.clone());
    }
    let eigenvalues = SymmetricEigen::new(problem.laplacian.clone()).eigenvalues;
    let mut sorted: Vec<f64> = eigenvalues.iter().copied().collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let lambda_max = sorted[n - 1];
    let lambda_2 = sorted[1];
    if lambda_2 <= 1e-10 * lambda_max.max(1.0) {
        return Err(Error::Singular);
    }
    let w_max = problem.weights.iter().copied().fold(0.0, f64::max);
    if w_max / (lambda_2 * problem.gamma) < SPLIT_RATIO {
        solve_split(problem)
    } else {
        solve_direct(problem)
    }
}

fn solve_direct(problem: &ConsensusProblem) -> Result<Vec<f64>> {
    let n = problem.n_nodes();
    let w = DVector::from_column_slice(&problem.weights);
    let mut m = &problem.laplacian * problem.gamma;
    for i in 0..n {
        m[(i, i)] += w[i];
    }
    let rhs = w.component_mul(&DVector::from_column_slice(&problem.targets));
    let chol = Cholesky::new(m).ok_or(Error::Singular)?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

fn remove_mean(v: &mut DVector<f64>) {
    let mean = v.mean();
    v.add_scalar_mut(-mean);
}

fn solve_split(problem: &ConsensusProblem) -> Result<Vec<f64>> {
    let n = problem.n_nodes();
    let w = DVector::from_column_slice(&problem.weights);
    let z = DVector::from_column_slice(&problem.targets);
    let w_sum = w.sum();
    let wz = w.dot(&z);

    let augmented = problem.laplacian.add_scalar(1.0 / n as f64);
    let chol = Cholesky::new(augmented).ok_or(Error::Singular)?;

    let mut v = DVector::zeros(n);
    let mut common = wz / w_sum;
    for _ in 0..MAX_SPLIT_ROUNDS {
        common = (wz - w.dot(&v)) / w_sum;
        let mut residual = (&z - &v).add_scalar(-common).component_mul(&w);
        remove_mean(&mut residual);
        let mut next = chol.solve(&residual) / problem.gamma;
        remove_mean(&mut next);
        let change = (&next - &v).amax();
        let scale = next.amax();
        v = next;
        if change <= f64::EPSILON * scale || change == 0.0 {
            break;
        }
    }
    Ok(v.iter().map(|d| common + d).collect())
}

/// `sum w_n z_n / sum w_n`, the large-`gamma` limit of every node's estimate.
pub fn weighted_mean_limit(weights: &[f64], targets: &[f64]) -> Result<f64> {
    if weights.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: targets.len(),
        });
    }
    if weights.is_empty() {
        return Err(Error::TooFewValues { needed: 1, got: 0 });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::invalid("weights", "must be positive and finite"));
    }
    let num: f64 = weights.iter().zip(targets).map(|(w, z)| w * z).sum();
    Ok(num / weights.iter().sum::<f64>())
}

/// Variance of the common offset after `n_intervals` i.i.d. offset-error
/// vectors have accumulated, in the large-`gamma` limit:
/// `I sigma_e^2 sum w^2 / (sum w)^2`, which is `I sigma_e^2 / N` for equal
/// weights.
pub fn accumulated_error_prediction(problem: &ConsensusProblem, n_intervals: usize) -> f64 {
    let w_sum: f64 = problem.weights.iter().sum();
    let w_sq: f64 = problem.weights.iter().map(|w| w * w).sum();
    n_intervals as f64 * problem.offset_error_var * w_sq / (w_sum * w_sum)
}
