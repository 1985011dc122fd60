//! Linear solves for the symmetric systems produced by the assembly.
//!
//! Two strategies share one contract: a sparse direct factorization (Cholesky
//! first, LU with partial pivoting when the matrix is not positive definite)
//! and Jacobi-preconditioned conjugate gradients. Every solve ends with a
//! residual check; a result that misses the contract is an error.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Col, Side};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::{axpy, dot, norm2, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Direct,
    ConjugateGradient,
}

/// What a solve must deliver: `‖Ax − b‖₂ ≤ tolerance · ‖b‖₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSolveContract {
    pub method: SolveMethod,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LinearSolveContract {
    fn default() -> Self {
        Self { method: SolveMethod::Direct, tolerance: 1e-12, max_iterations: 10_000 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("conjugate gradient breakdown at iteration {iteration}: curvature {curvature:e} (matrix not positive definite)")]
    IndefiniteMatrix { iteration: usize, curvature: f64 },
    #[error("factorization failed: matrix is singular")]
    SingularFactorization,
    #[error("no convergence within {iterations} iterations (relative residual {residual:e})")]
    MaxIterationsExceeded { iterations: usize, residual: f64 },
    #[error("relative residual {residual:e} exceeds the tolerance {tolerance:e}")]
    ContractViolated { residual: f64, tolerance: f64 },
    #[error("matrix is {rows}x{cols} but the right-hand side has length {rhs}")]
    DimensionMismatch { rows: usize, cols: usize, rhs: usize },
}

/// Which path produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePath {
    Cholesky,
    Lu,
    ConjugateGradient { iterations: usize },
    Trivial,
}

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    /// Post-solve `‖Ax − b‖₂ / ‖b‖₂`.
    pub relative_residual: f64,
    pub path: SolvePath,
}

pub fn solve(
    matrix: &CsrMatrix,
    rhs: &[f64],
    contract: &LinearSolveContract,
) -> Result<LinearSolution, SolverError> {
    if matrix.nrows() != matrix.ncols() || matrix.nrows() != rhs.len() {
        return Err(SolverError::DimensionMismatch {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
            rhs: rhs.len(),
        });
    }
    let b_norm = norm2(rhs);
    if b_norm == 0.0 {
        return Ok(LinearSolution {
            x: vec![0.0; rhs.len()],
            relative_residual: 0.0,
            path: SolvePath::Trivial,
        });
    }
    match contract.method {
        SolveMethod::Direct => solve_direct(matrix, rhs, b_norm, contract.tolerance),
        SolveMethod::ConjugateGradient => solve_cg(matrix, rhs, b_norm, contract),
    }
}

fn relative_residual(matrix: &CsrMatrix, x: &[f64], rhs: &[f64], b_norm: f64) -> (Vec<f64>, f64) {
    let mut r = rhs.to_vec();
    axpy(-1.0, &matrix.mul_vec(x), &mut r);
    let rel = norm2(&r) / b_norm;
    (r, rel)
}

enum Factor {
    Llt(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Lu(faer::sparse::linalg::solvers::Lu<usize, f64>),
}

impl Factor {
    fn apply(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Col::<f64>::from_fn(b.len(), |i| b[i]);
        let x = match self {
            Factor::Llt(f) => f.solve(&rhs),
            Factor::Lu(f) => f.solve(&rhs),
        };
        (0..b.len()).map(|i| x[i]).collect()
    }
}

fn solve_direct(
    matrix: &CsrMatrix,
    rhs: &[f64],
    b_norm: f64,
    tolerance: f64,
) -> Result<LinearSolution, SolverError> {
    let n = matrix.nrows();
    let (col_ptr, row_idx, values) = matrix.to_csc_arrays();
    let symbolic = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
    let a = SparseColMat::<usize, f64>::new(symbolic, values);

    let (factor, path) = match a.sp_cholesky(Side::Lower) {
        Ok(llt) => (Factor::Llt(llt), SolvePath::Cholesky),
        Err(_) => match a.sp_lu() {
            Ok(lu) => (Factor::Lu(lu), SolvePath::Lu),
            Err(_) => return Err(SolverError::SingularFactorization),
        },
    };

    let mut x = factor.apply(rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::SingularFactorization);
    }
    let (mut r, mut rel) = relative_residual(matrix, &x, rhs, b_norm);
    // a few sweeps of iterative refinement with the same factors
    for _ in 0..3 {
        if rel <= tolerance {
            break;
        }
        let d = factor.apply(&r);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::SingularFactorization);
        }
        axpy(1.0, &d, &mut x);
        let next = relative_residual(matrix, &x, rhs, b_norm);
        r = next.0;
        rel = next.1;
    }
    if !rel.is_finite() {
        return Err(SolverError::SingularFactorization);
    }
    if rel > tolerance {
        return Err(SolverError::ContractViolated { residual: rel, tolerance });
    }
    Ok(LinearSolution { x, relative_residual: rel, path })
}

fn solve_cg(
    matrix: &CsrMatrix,
    rhs: &[f64],
    b_norm: f64,
    contract: &LinearSolveContract,
) -> Result<LinearSolution, SolverError> {
    let n = rhs.len();
    let diag = matrix.diagonal();
    if let Some(&d) = diag.iter().find(|d| **d <= 0.0) {
        return Err(SolverError::IndefiniteMatrix { iteration: 0, curvature: d });
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for iteration in 1..=contract.max_iterations {
        let ap = matrix.mul_vec(&p);
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 {
            return Err(SolverError::IndefiniteMatrix { iteration, curvature });
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if norm2(&r) <= contract.tolerance * b_norm {
            // recomputed residual guards against drift in the recurrence
            let (_, rel) = relative_residual(matrix, &x, rhs, b_norm);
            if rel <= contract.tolerance {
                return Ok(LinearSolution {
                    x,
                    relative_residual: rel,
                    path: SolvePath::ConjugateGradient { iterations: iteration },
                });
            }
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let (_, rel) = relative_residual(matrix, &x, rhs, b_norm);
    Err(SolverError::MaxIterationsExceeded { iterations: contract.max_iterations, residual: rel })
}
