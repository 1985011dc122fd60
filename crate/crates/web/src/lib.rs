use wasm_bindgen::prelude::*;

use ptc_galerkin::ptc::{reduction_factor, theoretical_step_size};
use ptc_galerkin::{build_initial_mesh, builtin, run, AdaptiveConfig, DomainSpec, Mesh};

fn flat_vertices(mesh: &Mesh) -> Vec<f64> {
    mesh.vertices().iter().flat_map(|p| [p[0], p[1]]).collect()
}

fn flat_cells(mesh: &Mesh) -> Vec<u32> {
    mesh.cells().flat_map(|c| c.iter().map(|&v| v as u32)).collect()
}

/// Result of an adaptive solve, laid out for drawing.
#[wasm_bindgen]
pub struct Solution {
    vertices: Vec<f64>,
    triangles: Vec<u32>,
    values: Vec<f64>,
    dofs: Vec<u32>,
    totals: Vec<f64>,
    refine: Vec<u8>,
    lo: f64,
    hi: f64,
}

#[wasm_bindgen]
impl Solution {
    /// `x0, y0, x1, y1, ...`
    pub fn vertices(&self) -> Vec<f64> {
        self.vertices.clone()
    }

    pub fn triangles(&self) -> Vec<u32> {
        self.triangles.clone()
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// One entry per log row.
    pub fn log_dofs(&self) -> Vec<u32> {
        self.dofs.clone()
    }

    pub fn log_totals(&self) -> Vec<f64> {
        self.totals.clone()
    }

    /// 1 for REFINE rows, 0 for PTC rows.
    pub fn log_refine(&self) -> Vec<u8> {
        self.refine.clone()
    }

    /// Domain bounds `[lo, hi]²`.
    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }
}

#[wasm_bindgen]
pub fn solve(problem: &str, epsilon: f64, dof_max: u32, theta: f64) -> Result<Solution, JsError> {
    let spec = builtin(problem, epsilon)?;
    let config = AdaptiveConfig { theta, dof_max: dof_max as usize, record_timing: false, ..Default::default() };
    let out = run(&spec, &config)?;
    let (lo, hi) = match spec.domain {
        DomainSpec::Square { lo, hi } => (lo, hi),
        _ => (0.0, 1.0),
    };
    Ok(Solution {
        vertices: flat_vertices(&out.mesh),
        triangles: flat_cells(&out.mesh),
        values: out.solution.coefficients,
        dofs: out.log.iter().map(|r| r.dof as u32).collect(),
        totals: out.log.iter().map(|r| r.total).collect(),
        refine: out.log.iter().map(|r| (r.action == ptc_galerkin::Action::Refine) as u8).collect(),
        lo,
        hi,
    })
}

/// `γ(t)` at `samples` log-spaced points of `[t_min, t_max]`, as `t0, γ0, t1, γ1, ...`.
#[wasm_bindgen]
pub fn reduction_curve(mu: f64, l: f64, residual_norm: f64, t_min: f64, t_max: f64, samples: u32) -> Vec<f64> {
    let n = samples.max(2);
    let (a, b) = (t_min.max(1e-12).ln(), t_max.max(t_min).ln());
    (0..n)
        .flat_map(|i| {
            let t = (a + (b - a) * i as f64 / (n - 1) as f64).exp();
            [t, reduction_factor(t, mu, l, residual_norm)]
        })
        .collect()
}

/// The minimizing step of `γ`, or NaN when every step reduces the residual.
#[wasm_bindgen]
pub fn optimal_step(mu: f64, l: f64, residual_norm: f64) -> f64 {
    theoretical_step_size(mu, l, residual_norm).unwrap_or(f64::NAN)
}

/// A unit-square mesh refined by clicking.
#[wasm_bindgen]
pub struct Playground {
    mesh: Mesh,
}

#[wasm_bindgen]
impl Playground {
    #[wasm_bindgen(constructor)]
    pub fn new(resolution: u32) -> Result<Playground, JsError> {
        Ok(Playground { mesh: build_initial_mesh(&DomainSpec::unit_square(), resolution.max(1) as usize)? })
    }

    /// Bisects the cell containing `(x, y)` and closes the mesh; returns false outside the square.
    pub fn refine_at(&mut self, x: f64, y: f64) -> bool {
        match self.mesh.locate([x, y], 1e-12) {
            Some(c) => {
                self.mesh = self.mesh.refine(&[c]).mesh;
                true
            }
            None => false,
        }
    }

    pub fn vertices(&self) -> Vec<f64> {
        flat_vertices(&self.mesh)
    }

    pub fn triangles(&self) -> Vec<u32> {
        flat_cells(&self.mesh)
    }

    pub fn cell_count(&self) -> u32 {
        self.mesh.cell_count() as u32
    }

    pub fn dof_count(&self) -> u32 {
        self.mesh.dof_count() as u32
    }

    /// Smallest interior angle in degrees.
    pub fn min_angle(&self) -> f64 {
        self.mesh.min_angle().to_degrees()
    }
}
