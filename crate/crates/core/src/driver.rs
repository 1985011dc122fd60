//! The adaptive interplay loop: each iteration takes one PTC step on the
//! current mesh, evaluates both residual families and either refines (when
//! `R² ≤ θ Σ η²`) or advances with the proposed step size.

use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{total_report, EstimatorReport, StepData};
use crate::fem::{interpolate_to_refined, FemError, FemFunction, FemProblem};
use crate::linear_solver::LinearSolveContract;
use crate::mesh::{build_initial_mesh, Mesh, MeshError};
use crate::problems::{sigma_f_over, ProblemSpec};
use crate::ptc::{propose_step_size, ptc_step, HilbertProblem, PtcError, StepControl};
use crate::quadrature::QuadratureRule;
use crate::sparse::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveConfig {
    pub theta: f64,
    pub k0: f64,
    pub dof_max: usize,
    pub marking_fraction: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub stationarity_tol: f64,
    pub max_iterations: usize,
    /// Initial mesh resolution.
    pub resolution: usize,
    /// Degree of exactness of the cell quadrature; `None` picks the default rule.
    pub quadrature_degree: Option<usize>,
    pub solver: LinearSolveContract,
    /// Retries after a failed step, each with `k` divided by 10.
    pub max_step_retries: usize,
    /// Write wall-clock seconds to the log; zeros keep logs reproducible.
    pub record_timing: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            k0: 1.0,
            dof_max: 10_000,
            marking_fraction: 0.5,
            k_min: 1e-8,
            k_max: 1e8,
            stationarity_tol: 1e-12,
            max_iterations: 500,
            resolution: 4,
            quadrature_degree: None,
            solver: LinearSolveContract::default(),
            max_step_retries: 8,
            record_timing: true,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.theta > 0.0) {
            return Err(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.marking_fraction > 0.0 && self.marking_fraction <= 1.0) {
            return Err(format!("marking_fraction must lie in (0, 1], got {}", self.marking_fraction));
        }
        if !(self.k_min > 0.0 && self.k_min <= self.k_max) {
            return Err(format!("need 0 < k_min <= k_max, got {} and {}", self.k_min, self.k_max));
        }
        if !(self.k0 > 0.0 && self.k0.is_finite()) {
            return Err(format!("k0 must be positive, got {}", self.k0));
        }
        if self.resolution == 0 {
            return Err("resolution must be at least 1".into());
        }
        if !(self.solver.tolerance > 0.0) {
            return Err(format!("solver tolerance must be positive, got {}", self.solver.tolerance));
        }
        Ok(())
    }

    pub fn step_control(&self) -> StepControl {
        StepControl { k_min: self.k_min, k_max: self.k_max, ..StepControl::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "PTC")]
    Ptc,
    #[serde(rename = "REFINE")]
    Refine,
}

/// One log row; the serialized header is `n,dof,k,R,eta,total,action,seconds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    pub dof: usize,
    pub k: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub eta: f64,
    pub total: f64,
    pub action: Action,
    pub seconds: f64,
}

pub type IterationLog = Vec<IterationRecord>;

pub fn write_log_csv<W: Write>(log: &[IterationRecord], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for row in log {
        w.serialize(row)?;
    }
    if log.is_empty() {
        w.write_record(["n", "dof", "k", "R", "eta", "total", "action", "seconds"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log_csv<R: Read>(reader: R) -> Result<IterationLog, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The next refinement would exceed the DOF budget.
    BudgetExhausted,
    /// A PTC step left the iterate unchanged up to the stationarity tolerance.
    Stationary,
}

#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub mesh: Mesh,
    pub solution: FemFunction,
    pub log: IterationLog,
    pub termination: Termination,
    pub final_report: EstimatorReport,
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("step failed at iteration {iteration} with k = {k:e}: {source}")]
    SolverFailure { iteration: usize, k: f64, source: PtcError, log: IterationLog },
    #[error("no termination after {iterations} iterations")]
    NonConvergence { iterations: usize, log: IterationLog },
    #[error(transparent)]
    Fem(#[from] FemError),
}

impl DriverError {
    /// Rows logged before the failure, when available.
    pub fn log(&self) -> Option<&[IterationRecord]> {
        match self {
            DriverError::SolverFailure { log, .. } | DriverError::NonConvergence { log, .. } => Some(log),
            _ => None,
        }
    }
}

/// Dörfler marking: the fewest elements, taken by descending `η` (ties by
/// ascending id), whose `Σ η²` reaches `fraction · Σ_T η_T²`. Returned in
/// ascending id order; all-zero indicators mark element 0.
pub fn mark(eta: &[f64], fraction: f64) -> Vec<usize> {
    if eta.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..eta.len()).collect();
    order.sort_by(|&a, &b| eta[b].total_cmp(&eta[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&i| eta[i] * eta[i]).sum();
    if total <= 0.0 {
        return vec![0];
    }
    let target = fraction * total;
    let mut sum = 0.0;
    let mut marked = Vec::new();
    for i in order {
        marked.push(i);
        sum += eta[i] * eta[i];
        if sum >= target {
            break;
        }
    }
    marked.sort_unstable();
    marked
}

struct StepOutcome {
    k: f64,
    delta: Vec<f64>,
    next: Vec<f64>,
    residual: Vec<f64>,
}

fn step_with_retries(
    problem: &FemProblem<'_>,
    x: &[f64],
    k: f64,
    config: &AdaptiveConfig,
) -> Result<StepOutcome, (f64, PtcError)> {
    let mut k = k;
    let mut attempt = 0;
    loop {
        match ptc_step(problem, x, k, &config.solver) {
            Ok(s) => return Ok(StepOutcome { k, delta: s.delta, next: s.next, residual: s.residual }),
            Err(e @ (PtcError::SolverFailure(_) | PtcError::NonFiniteCoefficient { .. }))
                if attempt < config.max_step_retries && k / 10.0 >= config.k_min =>
            {
                log::warn!("step with k = {k:e} failed ({e}); retrying with k / 10");
                k /= 10.0;
                attempt += 1;
            }
            Err(e) => return Err((k, e)),
        }
    }
}

/// Runs the adaptive loop from the problem's initial guess on its domain.
pub fn run(spec: &ProblemSpec, config: &AdaptiveConfig) -> Result<AdaptiveOutcome, DriverError> {
    config.validate().map_err(DriverError::InvalidConfig)?;
    let mesh = build_initial_mesh(&spec.domain, config.resolution)?;
    let u0 = FemFunction::from_initial_guess(&mesh, &spec.initial_guess);
    run_from(spec, config, mesh, u0)
}

/// Runs the adaptive loop from a given mesh and starting iterate.
pub fn run_from(
    spec: &ProblemSpec,
    config: &AdaptiveConfig,
    mut mesh: Mesh,
    mut u: FemFunction,
) -> Result<AdaptiveOutcome, DriverError> {
    config.validate().map_err(DriverError::InvalidConfig)?;
    u.check(&mesh)?;
    let control = config.step_control();
    // Instant is unavailable on some targets; only touch it when timing is wanted
    let clock = config.record_timing.then(Instant::now);
    let mut k = control.clamp(config.k0);
    let mut log = IterationLog::new();

    for n in 0..config.max_iterations {
        let quadrature = match config.quadrature_degree {
            Some(d) => QuadratureRule::for_degree(mesh.dim(), d),
            None => QuadratureRule::default_for(mesh.dim()),
        };
        let problem = FemProblem::new(&mesh, spec, quadrature.clone());
        let x = problem.to_dofs(&u);
        let step = match step_with_retries(&problem, &x, k, config) {
            Ok(s) => s,
            Err((k, source)) => return Err(DriverError::SolverFailure { iteration: n, k, source, log }),
        };
        k = step.k;
        let delta_fn = problem.to_function(&step.delta);
        let report = total_report(&StepData {
            mesh: &mesh,
            u_n: &u,
            delta: &delta_fn,
            k,
            spec,
            quadrature: &quadrature,
        })?;
        let next = problem.to_function(&step.next);
        if log::log_enabled!(log::Level::Debug) {
            let sigma = sigma_f_over(spec, mesh.vertices(), &next.coefficients);
            log::debug!("n = {n}: dof = {}, k = {k:e}, sup f'(u) = {sigma:.6}", mesh.dof_count());
        }
        let refine = report.r_omega_sq <= config.theta * report.eta_total_sq;
        log.push(IterationRecord {
            n,
            dof: mesh.dof_count(),
            k,
            r: report.r_omega(),
            eta: report.eta_total(),
            total: report.total_estimator,
            action: if refine { Action::Refine } else { Action::Ptc },
            seconds: clock.map_or(0.0, |c| c.elapsed().as_secs_f64()),
        });

        if refine {
            let marked = mark(&report.eta_per_element, config.marking_fraction);
            let (child, child_u) = refine_increasing_dofs(&mesh, &next, &marked)?;
            if child.dof_count() > config.dof_max {
                return Ok(AdaptiveOutcome {
                    mesh,
                    solution: next,
                    log,
                    termination: Termination::BudgetExhausted,
                    final_report: report,
                });
            }
            mesh = child;
            u = child_u;
        } else {
            let delta_norm_sq = problem.x_inner(&step.delta, &step.delta);
            let stationary =
                delta_norm_sq.sqrt() <= config.stationarity_tol * problem.x_norm(&x).max(1.0);
            let pairing_n = dot(&step.residual, &step.delta);
            let pairing_np1 = problem
                .pairing(&step.next, &step.delta)
                .map_err(|source| DriverError::SolverFailure { iteration: n, k, source, log: log.clone() })?;
            u = next;
            if stationary {
                return Ok(AdaptiveOutcome {
                    mesh,
                    solution: u,
                    log,
                    termination: Termination::Stationary,
                    final_report: report,
                });
            }
            if let Ok(record) = propose_step_size(pairing_n, pairing_np1, delta_norm_sq, k, &control) {
                k = record.k_star;
            }
        }
    }
    Err(DriverError::NonConvergence { iterations: config.max_iterations, log })
}

/// Refines the marked cells; when only boundary vertices were created the
/// children of the marked cells are bisected again until a degree of
/// freedom appears.
fn refine_increasing_dofs(mesh: &Mesh, u: &FemFunction, marked: &[usize]) -> Result<(Mesh, FemFunction), FemError> {
    let dof = mesh.dof_count();
    let mut r = mesh.refine(marked);
    let mut v = interpolate_to_refined(u, mesh, &r)?;
    let mut marked_now: Vec<bool> = vec![false; mesh.cell_count()];
    for &c in marked {
        marked_now[c] = true;
    }
    for _ in 0..8 {
        if r.mesh.dof_count() > dof {
            break;
        }
        let again: Vec<usize> = (0..r.mesh.cell_count()).filter(|&c| marked_now[r.cell_parent[c]]).collect();
        let next = r.mesh.refine(&again);
        v = interpolate_to_refined(&v, &r.mesh, &next)?;
        marked_now = (0..next.mesh.cell_count()).map(|c| again.binary_search(&next.cell_parent[c]).is_ok()).collect();
        r = next;
    }
    Ok((r.mesh, v))
}
