//! Pseudo-transient continuation on an abstract Hilbert-space problem.
//!
//! One step solves `(δ, v)_X − k ⟨F′(u)δ, v⟩ = ⟨F(u), v⟩` for all `v` and
//! sets `u ← u + kδ`. In coordinates with Gram matrix `G` and Jacobian
//! `J_ij = ⟨F′(u)e_j, e_i⟩` this is `(G − kJ) δ = r` with `r_i = ⟨F(u), e_i⟩`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linear_solver::{self, LinearSolveContract, SolveMethod, SolverError};
use crate::sparse::{axpy, dot, CsrMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PtcError {
    #[error("linear solve failed: {0}")]
    SolverFailure(#[from] SolverError),
    #[error("non-finite value of f or f' on element {element}")]
    NonFiniteCoefficient { element: usize },
    #[error("increment vanished: the iterate is stationary")]
    DegenerateIncrement,
    #[error("L·‖F‖ = {product:e} does not exceed μ² = {mu_sq:e}; every step reduces the residual")]
    NotApplicable { product: f64, mu_sq: f64 },
    #[error("coefficient vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A nonlinear operator `F: X → X′` on a finite-dimensional space.
///
/// Implementations must not mutate shared state while evaluating.
pub trait HilbertProblem: Sync {
    fn dim(&self) -> usize;

    /// Coefficients `r_i = ⟨F(u), e_i⟩`.
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>, PtcError>;

    /// Matrix `J_ij = ⟨F′(u)e_j, e_i⟩`.
    fn jacobian(&self, u: &[f64]) -> Result<CsrMatrix, PtcError>;

    /// Gram matrix of the X inner product.
    fn inner_product(&self) -> &CsrMatrix;

    /// `⟨F′(u)w, ·⟩` as a coefficient vector.
    fn apply_jacobian(&self, u: &[f64], w: &[f64]) -> Result<Vec<f64>, PtcError> {
        Ok(self.jacobian(u)?.mul_vec(w))
    }

    /// `⟨F(u), v⟩`.
    fn pairing(&self, u: &[f64], v: &[f64]) -> Result<f64, PtcError> {
        Ok(dot(&self.residual(u)?, v))
    }

    /// Matrix of `A[k; u] = (·,·)_X − k F′(u)`.
    fn ptc_operator(&self, u: &[f64], k: f64) -> Result<CsrMatrix, PtcError> {
        Ok(self.inner_product().add_scaled(-k, &self.jacobian(u)?))
    }

    fn x_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.inner_product().bilinear(u, v)
    }

    fn x_norm(&self, u: &[f64]) -> f64 {
        self.x_inner(u, u).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PtcState {
    pub n: usize,
    pub u: Vec<f64>,
    pub k: f64,
    pub residual_norm_estimate: f64,
}

impl PtcState {
    pub fn new(u: Vec<f64>, k: f64) -> Self {
        Self { n: 0, u, k, residual_norm_estimate: f64::INFINITY }
    }
}

/// Clamps and thresholds of the step-size law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub k_min: f64,
    pub k_max: f64,
    /// Relative size of `|⟨F(u_{n+1}),δ⟩ − ‖δ‖²|` below which the proposal is `k_max`.
    pub degenerate_tol: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { k_min: 1e-8, k_max: 1e8, degenerate_tol: 1e-14 }
    }
}

impl StepControl {
    pub fn clamp(&self, k: f64) -> f64 {
        k.clamp(self.k_min, self.k_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControlRecord {
    pub pairing_n: f64,
    pub pairing_np1: f64,
    pub delta_norm_sq: f64,
    pub k_n: f64,
    pub mu_n: f64,
    pub l_n: f64,
    /// Proposal before clamping (infinite in the degenerate branch).
    pub k_star_raw: f64,
    pub k_star: f64,
}

/// The computable step-size proposal built from the pairings of the
/// completed step. Signs are kept; only the ratio is taken in absolute value.
pub fn propose_step_size(
    pairing_n: f64,
    pairing_np1: f64,
    delta_norm_sq: f64,
    k_n: f64,
    control: &StepControl,
) -> Result<StepControlRecord, PtcError> {
    if delta_norm_sq <= 0.0 {
        return Err(PtcError::DegenerateIncrement);
    }
    let num = pairing_n - delta_norm_sq;
    let den = pairing_np1 - delta_norm_sq;
    let mu_n = num / (k_n * delta_norm_sq);
    let l_n = 2.0 * den.abs() / (k_n * k_n * delta_norm_sq.powf(1.5));
    let (k_star_raw, k_star) = if den.abs() < control.degenerate_tol * delta_norm_sq {
        (f64::INFINITY, control.k_max)
    } else {
        let raw = 0.5 * k_n * (num / den).abs();
        (raw, control.clamp(raw))
    };
    Ok(StepControlRecord { pairing_n, pairing_np1, delta_norm_sq, k_n, mu_n, l_n, k_star_raw, k_star })
}

/// Minimizer `μ / (L‖F‖ − μ²)` of the reduction factor.
pub fn theoretical_step_size(mu: f64, l: f64, residual_norm: f64) -> Result<f64, PtcError> {
    let product = l * residual_norm;
    let mu_sq = mu * mu;
    if product <= mu_sq {
        return Err(PtcError::NotApplicable { product, mu_sq });
    }
    Ok(mu / (product - mu_sq))
}

/// `γ(t) = (1 + L t² ‖F‖ / (2(1 + tμ))) / (1 + tμ)`.
pub fn reduction_factor(t: f64, mu: f64, l: f64, residual_norm: f64) -> f64 {
    let s = 1.0 + t * mu;
    (1.0 + l * t * t * residual_norm / (2.0 * s)) / s
}

#[derive(Debug, Clone, PartialEq)]
pub struct PtcStep {
    pub delta: Vec<f64>,
    pub next: Vec<f64>,
    /// `⟨F(u_n), e_i⟩`, the right-hand side of the solve.
    pub residual: Vec<f64>,
}

/// Solves `A[k; u] δ = F(u)` and returns `δ` and `u + kδ`.
///
/// A conjugate-gradient contract that meets an indefinite operator is
/// retried with the direct solver.
pub fn ptc_step<P: HilbertProblem + ?Sized>(
    problem: &P,
    u: &[f64],
    k: f64,
    contract: &LinearSolveContract,
) -> Result<PtcStep, PtcError> {
    if u.len() != problem.dim() {
        return Err(PtcError::DimensionMismatch { expected: problem.dim(), got: u.len() });
    }
    let residual = problem.residual(u)?;
    let a = problem.ptc_operator(u, k)?;
    let delta = solve_with_fallback(&a, &residual, contract)?;
    let mut next = u.to_vec();
    axpy(k, &delta, &mut next);
    Ok(PtcStep { delta, next, residual })
}

pub(crate) fn solve_with_fallback(
    a: &CsrMatrix,
    rhs: &[f64],
    contract: &LinearSolveContract,
) -> Result<Vec<f64>, SolverError> {
    match linear_solver::solve(a, rhs, contract) {
        Ok(sol) => Ok(sol.x),
        Err(SolverError::IndefiniteMatrix { .. }) if contract.method == SolveMethod::ConjugateGradient => {
            let direct = LinearSolveContract { method: SolveMethod::Direct, ..*contract };
            linear_solver::solve(a, rhs, &direct).map(|s| s.x)
        }
        Err(e) => Err(e),
    }
}

/// `‖φ‖_{X′} = sqrt(φᵀ G⁻¹ φ)` for a functional given by its coefficients.
pub fn dual_norm<P: HilbertProblem + ?Sized>(
    problem: &P,
    phi: &[f64],
    contract: &LinearSolveContract,
) -> Result<f64, PtcError> {
    let z = solve_with_fallback(problem.inner_product(), phi, contract)?;
    Ok(dot(phi, &z).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionCheck {
    pub measured_ratio: f64,
    pub gamma_bound: f64,
    pub residual_norm: f64,
}

/// One step of length `t` from `u0`, measured against `γ(t)`.
pub fn verify_reduction<P: HilbertProblem + ?Sized>(
    problem: &P,
    u0: &[f64],
    t: f64,
    mu: f64,
    l: f64,
    contract: &LinearSolveContract,
) -> Result<ReductionCheck, PtcError> {
    let f0 = problem.residual(u0)?;
    let norm0 = dual_norm(problem, &f0, contract)?;
    let gamma_bound = reduction_factor(t, mu, l, norm0);
    if t == 0.0 || norm0 == 0.0 {
        return Ok(ReductionCheck { measured_ratio: 1.0, gamma_bound, residual_norm: norm0 });
    }
    let step = ptc_step(problem, u0, t, contract)?;
    let norm1 = dual_norm(problem, &problem.residual(&step.next)?, contract)?;
    Ok(ReductionCheck { measured_ratio: norm1 / norm0, gamma_bound, residual_norm: norm0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtcStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct PtcSolution {
    pub state: PtcState,
    pub status: PtcStatus,
    pub records: Vec<StepControlRecord>,
}

/// Adaptive PTC on a fixed space until the increment is stationary.
pub fn solve_ptc<P: HilbertProblem + ?Sized>(
    problem: &P,
    u0: Vec<f64>,
    k0: f64,
    control: &StepControl,
    stationarity_tol: f64,
    max_iterations: usize,
    contract: &LinearSolveContract,
) -> Result<PtcSolution, PtcError> {
    let mut state = PtcState::new(u0, control.clamp(k0));
    let mut records = Vec::new();
    while state.n < max_iterations {
        let step = ptc_step(problem, &state.u, state.k, contract)?;
        let delta_norm_sq = problem.x_inner(&step.delta, &step.delta);
        let u_norm = problem.x_norm(&state.u);
        state.residual_norm_estimate = delta_norm_sq.sqrt();
        if delta_norm_sq.sqrt() <= stationarity_tol * u_norm.max(1.0) {
            state.u = step.next;
            state.n += 1;
            return Ok(PtcSolution { state, status: PtcStatus::Converged, records });
        }
        let pairing_n = dot(&step.residual, &step.delta);
        let pairing_np1 = problem.pairing(&step.next, &step.delta)?;
        let record = propose_step_size(pairing_n, pairing_np1, delta_norm_sq, state.k, control)?;
        records.push(record);
        state.u = step.next;
        state.k = record.k_star;
        state.n += 1;
    }
    Ok(PtcSolution { state, status: PtcStatus::MaxIterations, records })
}

/// Dense algebraic backend `F(u) = b − Au − c·(u∘u)` with Gram matrix `G`.
#[derive(Debug, Clone)]
pub struct DenseQuadratic {
    a: CsrMatrix,
    b: Vec<f64>,
    c: f64,
    gram: CsrMatrix,
}

impl DenseQuadratic {
    /// `a` and `gram` are row-major `n × n`.
    pub fn new(n: usize, a: &[f64], b: Vec<f64>, c: f64, gram: &[f64]) -> Self {
        assert_eq!(b.len(), n);
        Self {
            a: CsrMatrix::from_row_major(n, n, a),
            b,
            c,
            gram: CsrMatrix::from_row_major(n, n, gram),
        }
    }

    pub fn euclidean(n: usize, a: &[f64], b: Vec<f64>, c: f64) -> Self {
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            gram[i * n + i] = 1.0;
        }
        Self::new(n, a, b, c, &gram)
    }
}

impl HilbertProblem for DenseQuadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn residual(&self, u: &[f64]) -> Result<Vec<f64>, PtcError> {
        let au = self.a.mul_vec(u);
        Ok((0..u.len()).map(|i| self.b[i] - au[i] - self.c * u[i] * u[i]).collect())
    }

    fn jacobian(&self, u: &[f64]) -> Result<CsrMatrix, PtcError> {
        let n = u.len();
        let diag: Vec<_> = (0..n).map(|i| (i, i, -2.0 * self.c * u[i])).collect();
        Ok(CsrMatrix::from_triplets(n, n, &diag).add_scaled(-1.0, &self.a))
    }

    fn inner_product(&self) -> &CsrMatrix {
        &self.gram
    }
}
