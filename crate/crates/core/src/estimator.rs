//! Residual indicators of one PTC step on a fixed mesh.
//!
//! With `u_{n+1} = u_n + kδ` and the linearization
//! `T_f(u_{n+1}) = f(u_n) + f′(u_n) kδ`:
//!
//! * `R_T = ‖T_f(u_{n+1}) − δ − f(u_{n+1})‖_{0,T}` measures the linearization;
//! * `η_T² = α_T² ‖εΔu_{n+1} + T_f(u_{n+1}) − δ‖²_{0,T}
//!   + ½ Σ_E ε^{-1/2} α_E ‖ε [∇u_{n+1}]‖²_{0,E}` the discretization,
//!
//! with `α = min(1, ε^{-1/2} h)` and the sum over interior facets of `T`.
//! In 1D a facet is an interior node and its norm is the absolute value.

use serde::{Deserialize, Serialize};

use crate::fem::{FemError, FemFunction};
use crate::mesh::{Dim, Mesh, Point};
use crate::problems::ProblemSpec;
use crate::quadrature::{gauss_legendre_unit, QuadratureRule};

/// `(α_T, α_E)`.
pub fn weights(h_t: f64, h_e: f64, epsilon: f64) -> (f64, f64) {
    let s = epsilon.sqrt().recip();
    ((s * h_t).min(1.0), (s * h_e).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub eta_per_element: Vec<f64>,
    pub eta_total_sq: f64,
    pub r_per_element: Vec<f64>,
    pub r_omega_sq: f64,
    pub total_estimator: f64,
}

impl EstimatorReport {
    pub fn from_parts(eta_per_element: Vec<f64>, r_per_element: Vec<f64>) -> Self {
        let eta_total_sq = eta_per_element.iter().map(|e| e * e).sum::<f64>();
        let r_omega_sq = r_per_element.iter().map(|r| r * r).sum::<f64>();
        Self {
            eta_per_element,
            eta_total_sq,
            r_per_element,
            r_omega_sq,
            total_estimator: (eta_total_sq + r_omega_sq).sqrt(),
        }
    }

    pub fn r_omega(&self) -> f64 {
        self.r_omega_sq.sqrt()
    }

    pub fn eta_total(&self) -> f64 {
        self.eta_total_sq.sqrt()
    }
}

/// Inputs of one step: `u_n`, `δ_n` and `k_n` on a common mesh.
#[derive(Debug, Clone, Copy)]
pub struct StepData<'a> {
    pub mesh: &'a Mesh,
    pub u_n: &'a FemFunction,
    pub delta: &'a FemFunction,
    pub k: f64,
    pub spec: &'a ProblemSpec,
    pub quadrature: &'a QuadratureRule,
}

impl StepData<'_> {
    fn check(&self) -> Result<(), FemError> {
        self.u_n.check(self.mesh)?;
        self.delta.check(self.mesh)
    }

    /// Calls `visit(w|T|, x, T_f(u_{n+1}) − δ, f(u_{n+1}))` at each quadrature point of `c`.
    fn for_each_qp(&self, c: usize, mut visit: impl FnMut(f64, Point, f64, f64)) -> Result<(), FemError> {
        let g = self.mesh.cell_geometry(c);
        for (lam, w) in self.quadrature.points.iter().zip(&self.quadrature.weights) {
            let x = self.mesh.cell_point(c, lam);
            let (mut un, mut d) = (0.0, 0.0);
            for (k, &v) in g.nodes().iter().enumerate() {
                un += lam[k] * self.u_n.coefficients[v];
                d += lam[k] * self.delta.coefficients[v];
            }
            let step = self.k * d;
            let f_n = self.spec.f(x, un);
            let t_f = f_n + self.spec.df(x, un) * step;
            let f_np1 = self.spec.f(x, un + step);
            if !(t_f.is_finite() && f_np1.is_finite()) {
                return Err(FemError::NonFiniteCoefficient { element: c });
            }
            visit(w * g.measure, x, t_f - d, f_np1);
        }
        Ok(())
    }

    fn next_iterate(&self) -> Vec<f64> {
        self.u_n
            .coefficients
            .iter()
            .zip(&self.delta.coefficients)
            .map(|(u, d)| u + self.k * d)
            .collect()
    }
}

/// Per-element `R_T`.
pub fn linearization_residual(data: &StepData<'_>) -> Result<Vec<f64>, FemError> {
    data.check()?;
    (0..data.mesh.cell_count())
        .map(|c| {
            let mut s = 0.0;
            data.for_each_qp(c, |w, _, tf_minus_delta, f_np1| {
                let r = tf_minus_delta - f_np1;
                s += w * r * r;
            })?;
            Ok(s.sqrt())
        })
        .collect()
}

/// Per-element `‖T_f(u_{n+1}) − f(u_{n+1})‖_{0,T}`, the part of `R_T` that
/// is second order in `k`.
pub fn taylor_remainder(data: &StepData<'_>) -> Result<Vec<f64>, FemError> {
    data.check()?;
    (0..data.mesh.cell_count())
        .map(|c| {
            let g = data.mesh.cell_geometry(c);
            let mut s = 0.0;
            let mut lam_iter = data.quadrature.points.iter();
            data.for_each_qp(c, |w, _, tf_minus_delta, f_np1| {
                let lam = lam_iter.next().expect("one visit per point");
                let d: f64 = g.nodes().iter().enumerate().map(|(k, &v)| lam[k] * data.delta.coefficients[v]).sum();
                let r = tf_minus_delta + d - f_np1;
                s += w * r * r;
            })?;
            Ok(s.sqrt())
        })
        .collect()
}

/// `Δu` per element; identically zero for piecewise linear `u`.
pub fn elementwise_laplacian(mesh: &Mesh, _u: &FemFunction) -> Vec<f64> {
    vec![0.0; mesh.cell_count()]
}

/// Squared facet terms `ε^{-1/2} α_E ‖ε[∇u]‖²_{0,E}`, indexed by facet
/// (zero on boundary facets).
pub fn facet_jump_terms(mesh: &Mesh, u: &[f64], epsilon: f64) -> Vec<f64> {
    let (gauss_x, gauss_w) = gauss_legendre_unit(2);
    let mut out = vec![0.0; mesh.facets().len()];
    for (f, slot) in out.iter_mut().enumerate() {
        let Ok(frame) = mesh.facet_jump_frame(f) else {
            continue;
        };
        let grad = |c: usize| {
            let g = mesh.cell_geometry(c);
            let mut d = [0.0; 2];
            for (k, &v) in g.nodes().iter().enumerate() {
                d[0] += u[v] * g.grads[k][0];
                d[1] += u[v] * g.grads[k][1];
            }
            d
        };
        let n_sharp = frame.normal;
        let n_flat = [-n_sharp[0], -n_sharp[1]];
        let (g_sharp, g_flat) = (grad(frame.sharp), grad(frame.flat));
        // stepping along n♯ from the facet enters the flat cell, and vice versa
        let jump = g_flat[0] * n_sharp[0] + g_flat[1] * n_sharp[1] + g_sharp[0] * n_flat[0] + g_sharp[1] * n_flat[1];
        let norm_sq = match mesh.dim() {
            Dim::One => (epsilon * jump).powi(2),
            Dim::Two => {
                // the jump is constant along the edge; the rule is exact
                let len = frame.h;
                gauss_x.iter().zip(&gauss_w).map(|(_, w)| w * len * (epsilon * jump).powi(2)).sum()
            }
        };
        let (_, alpha_e) = weights(1.0, frame.h, epsilon);
        *slot = epsilon.sqrt().recip() * alpha_e * norm_sq;
    }
    out
}

/// Per-element `η_T`.
pub fn fem_residual(data: &StepData<'_>) -> Result<Vec<f64>, FemError> {
    data.check()?;
    let eps = data.spec.epsilon;
    let next = data.next_iterate();
    let next_fn = FemFunction { mesh_generation: data.mesh.generation(), coefficients: next.clone() };
    let laplacian = elementwise_laplacian(data.mesh, &next_fn);
    let facets = facet_jump_terms(data.mesh, &next, eps);
    (0..data.mesh.cell_count())
        .map(|c| {
            let mut interior = 0.0;
            data.for_each_qp(c, |w, _, tf_minus_delta, _| {
                let r = eps * laplacian[c] + tf_minus_delta;
                interior += w * r * r;
            })?;
            let h_t = data.mesh.cell_geometry(c).diameter;
            let (alpha_t, _) = weights(h_t, 1.0, eps);
            let facet_part: f64 = data.mesh.cell_facets(c).iter().map(|&f| 0.5 * facets[f]).sum();
            Ok((alpha_t * alpha_t * interior + facet_part).sqrt())
        })
        .collect()
}

pub fn total_report(data: &StepData<'_>) -> Result<EstimatorReport, FemError> {
    Ok(EstimatorReport::from_parts(fem_residual(data)?, linearization_residual(data)?))
}
