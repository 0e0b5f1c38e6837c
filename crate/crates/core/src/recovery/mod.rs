//! Compressed-sensing subproblems: sparse vectors from linear measurements
//! (optionally restricted to an active set) and sparse symmetric matrices
//! from rank-one measurements with an l1 residual budget.

mod iht;
mod ipm;

pub use ipm::{FEAS_TOL, GAP_TOL};

use crate::sampling::{DirectionKind, DirectionSet};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("solver did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize, last: Vec<f64> },
    #[error("constraint set is infeasible (residual budget too small for the data)")]
    Infeasible,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("measurement count {measurements} does not match direction count {directions}")]
    MeasurementMismatch { measurements: usize, directions: usize },
    #[error("sparsity budget {s} outside [1, {d}]")]
    BadSparsity { s: usize, d: usize },
    #[error("matrix recovery limited to d <= {max}, got d = {d}")]
    GuardrailExceeded { d: usize, max: usize },
    #[error("symmetric recovery requires ternary directions")]
    WrongEnsemble,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorSolver {
    #[default]
    Iht,
    L1Equality,
}

/// Sparse-vector recovery instance `y ≈ V z` with `z` s-sparse.
pub struct VectorRecoveryProblem<'a> {
    pub measurements: Array1<f64>,
    pub directions: &'a DirectionSet,
    pub sparsity: usize,
    pub solver: VectorSolver,
}

impl VectorRecoveryProblem<'_> {
    fn validate(&self) -> Result<(), RecoveryError> {
        if self.measurements.len() != self.directions.m {
            return Err(RecoveryError::MeasurementMismatch {
                measurements: self.measurements.len(),
                directions: self.directions.m,
            });
        }
        if self.sparsity == 0 || self.sparsity > self.directions.d {
            return Err(RecoveryError::BadSparsity { s: self.sparsity, d: self.directions.d });
        }
        Ok(())
    }
}

pub fn recover_vector(problem: &VectorRecoveryProblem) -> Result<Array1<f64>, RecoveryError> {
    problem.validate()?;
    let a = problem.directions.rows();
    match problem.solver {
        VectorSolver::Iht => iht::solve(a, &problem.measurements, problem.sparsity),
        VectorSolver::L1Equality => ipm::bp_equality(a, &problem.measurements),
    }
}

/// Same program restricted to the coordinates in `active`; all other entries
/// of the returned vector are exactly zero.
pub fn recover_vector_restricted(
    problem: &VectorRecoveryProblem,
    active: &[usize],
) -> Result<Array1<f64>, RecoveryError> {
    problem.validate()?;
    let d = problem.directions.d;
    let a = problem.directions.rows();
    let mut sub = Array2::zeros((a.nrows(), active.len()));
    for (c, &j) in active.iter().enumerate() {
        sub.column_mut(c).assign(&a.column(j));
    }
    let s = problem.sparsity.min(active.len().max(1));
    let z_sub = match problem.solver {
        VectorSolver::Iht => iht::solve(&sub, &problem.measurements, s)?,
        VectorSolver::L1Equality => ipm::bp_equality(&sub, &problem.measurements)?,
    };
    let mut z = Array1::zeros(d);
    for (c, &j) in active.iter().enumerate() {
        z[j] = z_sub[c];
    }
    Ok(z)
}

/// Sparse symmetric-matrix recovery from rank-one measurements
/// `y_j ≈ v_j^T H v_j` with residual budget `||y - M(H)||_1 <= eta`.
pub struct MatrixRecoveryProblem<'a> {
    pub measurements: Array1<f64>,
    pub directions: &'a DirectionSet,
    pub eta: f64,
}

pub const MATRIX_GUARDRAIL: usize = 64;

fn upper_len(d: usize) -> usize {
    d * (d + 1) / 2
}

fn upper_index(d: usize, i: usize, j: usize) -> usize {
    // row-major upper triangle including the diagonal
    debug_assert!(i <= j && j < d);
    i * d + j - i * (i + 1) / 2
}

/// Entrywise-l1 minimization over symmetric matrices, parameterized by the
/// upper triangle so symmetry holds by construction. `eta = 0` dispatches to
/// equality-constrained basis pursuit; `eta > 0` to the residual LP.
pub fn recover_symmetric_matrix(
    problem: &MatrixRecoveryProblem,
    d: usize,
) -> Result<Array2<f64>, RecoveryError> {
    if d > MATRIX_GUARDRAIL {
        return Err(RecoveryError::GuardrailExceeded { d, max: MATRIX_GUARDRAIL });
    }
    if problem.directions.kind != DirectionKind::Ternary {
        return Err(RecoveryError::WrongEnsemble);
    }
    if problem.measurements.len() != problem.directions.m {
        return Err(RecoveryError::MeasurementMismatch {
            measurements: problem.measurements.len(),
            directions: problem.directions.m,
        });
    }
    if !(problem.eta >= 0.0) {
        return Err(RecoveryError::Numerical(format!("eta = {} must be >= 0", problem.eta)));
    }
    let m = problem.directions.m;
    let nu = upper_len(d);
    // measurement matrix over upper-triangle unknowns:
    // v^T H v = sum_i v_i^2 H_ii + sum_{i<j} 2 v_i v_j H_ij
    let mut a = Array2::zeros((m, nu));
    for r in 0..m {
        let v = problem.directions.row(r);
        for i in 0..d {
            if v[i] == 0.0 {
                continue;
            }
            a[[r, upper_index(d, i, i)]] = v[i] * v[i];
            for j in (i + 1)..d {
                if v[j] != 0.0 {
                    a[[r, upper_index(d, i, j)]] = 2.0 * v[i] * v[j];
                }
            }
        }
    }
    // entrywise l1 over the full matrix weights off-diagonals twice
    let mut w = Array1::from_elem(nu, 2.0);
    for i in 0..d {
        w[upper_index(d, i, i)] = 1.0;
    }
    let u = if problem.eta == 0.0 {
        ipm::bp_equality_weighted(&a, &problem.measurements, &w)?
    } else {
        ipm::symmetric_l1(&a, &problem.measurements, &w, problem.eta)?
    };
    let mut h = Array2::zeros((d, d));
    for i in 0..d {
        for j in i..d {
            let v = u[upper_index(d, i, j)];
            h[[i, j]] = v;
            h[[j, i]] = v;
        }
    }
    Ok(h)
}
