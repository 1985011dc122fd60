//! P1 finite elements with homogeneous Dirichlet conditions.
//!
//! Boundary vertices are eliminated: assembled operators act on interior
//! vertices only, numbered by [`DofMap`]. Nonlinear integrals use a fixed
//! quadrature rule on every cell.

use thiserror::Error;

use crate::linear_solver::LinearSolveContract;
use crate::mesh::{CellGeometry, Dim, Mesh, Point, Refinement};
use crate::problems::{ExactSolution, InitialGuess, ProblemSpec};
use crate::ptc::{HilbertProblem, PtcError};
use crate::quadrature::QuadratureRule;
use crate::sparse::CsrMatrix;

const NONE: usize = usize::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("non-finite value of f or f' on element {element}")]
    NonFiniteCoefficient { element: usize },
    #[error("function belongs to mesh generation {got}, expected {expected}")]
    MeshMismatch { expected: usize, got: usize },
    #[error("refinement maps generation {parent} to {child}; function is on generation {got}")]
    AncestryMismatch { parent: usize, child: usize, got: usize },
    #[error("{got} coefficients for {expected} vertices")]
    LengthMismatch { expected: usize, got: usize },
}

impl From<FemError> for PtcError {
    fn from(e: FemError) -> Self {
        match e {
            FemError::NonFiniteCoefficient { element } => PtcError::NonFiniteCoefficient { element },
            FemError::MeshMismatch { expected, got }
            | FemError::AncestryMismatch { parent: expected, got, .. }
            | FemError::LengthMismatch { expected, got } => PtcError::DimensionMismatch { expected, got },
        }
    }
}

/// Interior vertex ↔ unknown numbering, ascending in vertex id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    dof_of_vertex: Vec<usize>,
    vertex_of_dof: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut dof_of_vertex = vec![NONE; mesh.vertex_count()];
        let mut vertex_of_dof = Vec::with_capacity(mesh.dof_count());
        for (v, slot) in dof_of_vertex.iter_mut().enumerate() {
            if !mesh.is_boundary_vertex(v) {
                *slot = vertex_of_dof.len();
                vertex_of_dof.push(v);
            }
        }
        Self { dof_of_vertex, vertex_of_dof }
    }

    pub fn len(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_of_dof.is_empty()
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        let d = self.dof_of_vertex[vertex];
        (d != NONE).then_some(d)
    }

    pub fn vertex(&self, dof: usize) -> usize {
        self.vertex_of_dof[dof]
    }

    /// Interior values of a per-vertex vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.vertex_of_dof.iter().map(|&v| full[v]).collect()
    }

    /// Per-vertex vector with zero boundary values.
    pub fn extend(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.len());
        let mut full = vec![0.0; self.dof_of_vertex.len()];
        for (d, &v) in self.vertex_of_dof.iter().enumerate() {
            full[v] = x[d];
        }
        full
    }
}

/// A P1 function stored by vertex values, bound to one mesh generation.
#[derive(Debug, Clone, PartialEq)]
pub struct FemFunction {
    pub mesh_generation: usize,
    pub coefficients: Vec<f64>,
}

impl FemFunction {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self { mesh_generation: mesh.generation(), coefficients: vec![0.0; mesh.vertex_count()] }
    }

    /// Nodal interpolant of `g`, with boundary values forced to zero.
    pub fn interpolate(mesh: &Mesh, g: impl Fn(Point) -> f64) -> Self {
        let coefficients = mesh
            .vertices()
            .iter()
            .enumerate()
            .map(|(v, &p)| if mesh.is_boundary_vertex(v) { 0.0 } else { g(p) })
            .collect();
        Self { mesh_generation: mesh.generation(), coefficients }
    }

    pub fn from_initial_guess(mesh: &Mesh, guess: &InitialGuess) -> Self {
        match guess {
            InitialGuess::Constant(c) => Self::interpolate(mesh, |_| *c),
            InitialGuess::Function(g) => Self::interpolate(mesh, |p| g(p)),
        }
    }

    pub fn from_dofs(mesh: &Mesh, dofs: &DofMap, x: &[f64]) -> Self {
        Self { mesh_generation: mesh.generation(), coefficients: dofs.extend(x) }
    }

    pub fn check(&self, mesh: &Mesh) -> Result<(), FemError> {
        if self.mesh_generation != mesh.generation() {
            return Err(FemError::MeshMismatch { expected: mesh.generation(), got: self.mesh_generation });
        }
        if self.coefficients.len() != mesh.vertex_count() {
            return Err(FemError::LengthMismatch {
                expected: mesh.vertex_count(),
                got: self.coefficients.len(),
            });
        }
        Ok(())
    }

    /// Value at `p`, or `None` outside the mesh.
    pub fn evaluate(&self, mesh: &Mesh, p: Point) -> Option<f64> {
        let c = mesh.locate(p, 1e-12)?;
        let bary = mesh.barycentric(c, p);
        Some(mesh.cell(c).iter().enumerate().map(|(k, &v)| bary[k] * self.coefficients[v]).sum())
    }
}

/// `|T| ∇λ_i·∇λ_j`.
pub fn local_stiffness(g: &CellGeometry) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for i in 0..g.n {
        for j in 0..g.n {
            k[i][j] = g.measure * (g.grads[i][0] * g.grads[j][0] + g.grads[i][1] * g.grads[j][1]);
        }
    }
    k
}

/// `∫_T λ_i λ_j`: `|T|(1 + δ_ij)/12` on triangles, `|T|(1 + δ_ij)/6` on intervals.
pub fn local_mass(g: &CellGeometry) -> [[f64; 3]; 3] {
    let denom = if g.n == 3 { 12.0 } else { 6.0 };
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate().take(g.n) {
        for (j, v) in row.iter_mut().enumerate().take(g.n) {
            *v = g.measure * if i == j { 2.0 } else { 1.0 } / denom;
        }
    }
    m
}

/// Mesh-dependent data shared by every assembly on one mesh.
#[derive(Debug, Clone)]
pub struct FemSpace<'m> {
    mesh: &'m Mesh,
    dofs: DofMap,
    geometry: Vec<CellGeometry>,
    quadrature: QuadratureRule,
    pattern: CsrMatrix,
    /// Value slots of local pairs `(i, j)` (row-major, 3×3), or `NONE`.
    slots: Vec<[usize; 9]>,
    mass: Vec<f64>,
    stiffness: Vec<f64>,
}

impl<'m> FemSpace<'m> {
    pub fn new(mesh: &'m Mesh, quadrature: QuadratureRule) -> Self {
        let dofs = DofMap::new(mesh);
        let geometry: Vec<_> = (0..mesh.cell_count()).map(|c| mesh.cell_geometry(c)).collect();
        let cell_dofs: Vec<Vec<usize>> = mesh
            .cells()
            .map(|cell| cell.iter().filter_map(|&v| dofs.dof(v)).collect())
            .collect();
        let pattern = CsrMatrix::from_cliques(dofs.len(), cell_dofs.iter().map(|c| c.as_slice()));
        let mut slots = Vec::with_capacity(geometry.len());
        let mut mass = vec![0.0; pattern.nnz()];
        let mut stiffness = vec![0.0; pattern.nnz()];
        for g in &geometry {
            let mut s = [NONE; 9];
            let (m_loc, k_loc) = (local_mass(g), local_stiffness(g));
            for i in 0..g.n {
                for j in 0..g.n {
                    if let (Some(di), Some(dj)) = (dofs.dof(g.nodes[i]), dofs.dof(g.nodes[j])) {
                        let p = pattern.position(di, dj).expect("clique pattern covers the cell");
                        s[3 * i + j] = p;
                        mass[p] += m_loc[i][j];
                        stiffness[p] += k_loc[i][j];
                    }
                }
            }
            slots.push(s);
        }
        Self { mesh, dofs, geometry, quadrature, pattern, slots, mass, stiffness }
    }

    pub fn with_default_quadrature(mesh: &'m Mesh) -> Self {
        Self::new(mesh, QuadratureRule::default_for(mesh.dim()))
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn geometry(&self) -> &[CellGeometry] {
        &self.geometry
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quadrature
    }

    pub fn mass_matrix(&self) -> CsrMatrix {
        self.pattern.with_values(self.mass.clone())
    }

    pub fn stiffness_matrix(&self) -> CsrMatrix {
        self.pattern.with_values(self.stiffness.clone())
    }

    /// `M + εK` on interior unknowns.
    pub fn x_inner_product(&self, epsilon: f64) -> CsrMatrix {
        self.combine(1.0, epsilon, 0.0, None)
    }

    /// `a·M + b·K + c·W` over the shared pattern.
    fn combine(&self, a: f64, b: f64, c: f64, w: Option<&[f64]>) -> CsrMatrix {
        let values = (0..self.mass.len())
            .map(|p| a * self.mass[p] + b * self.stiffness[p] + w.map_or(0.0, |w| c * w[p]))
            .collect();
        self.pattern.with_values(values)
    }

    /// Quadrature loop over one cell: calls `visit(weight·|T|, λ, x, u_h(x))`.
    fn for_each_qp(&self, c: usize, u: &[f64], mut visit: impl FnMut(f64, &[f64; 3], Point, f64)) {
        let g = &self.geometry[c];
        let verts = self.mesh.vertices();
        for (lam, w) in self.quadrature.points.iter().zip(&self.quadrature.weights) {
            let mut x = [0.0; 2];
            let mut uq = 0.0;
            for k in 0..g.n {
                let p = verts[g.nodes[k]];
                x[0] += lam[k] * p[0];
                x[1] += lam[k] * p[1];
                uq += lam[k] * u[g.nodes[k]];
            }
            visit(w * g.measure, lam, x, uq);
        }
    }

    /// `∫ f(u)φ_i` for interior `i` and the reaction matrix `∫ f′(u)φ_iφ_j`
    /// (values over the pattern), from per-vertex `u`.
    fn reaction(&self, spec: &ProblemSpec, u: &[f64], want_matrix: bool) -> Result<(Vec<f64>, Vec<f64>), FemError> {
        let mut load = vec![0.0; self.dofs.len()];
        let mut w = if want_matrix { vec![0.0; self.pattern.nnz()] } else { Vec::new() };
        for c in 0..self.geometry.len() {
            let g = &self.geometry[c];
            let mut f_loc = [0.0; 3];
            let mut w_loc = [[0.0; 3]; 3];
            let mut finite = true;
            self.for_each_qp(c, u, |wq, lam, x, uq| {
                let fq = spec.f(x, uq);
                let dfq = if want_matrix { spec.df(x, uq) } else { 0.0 };
                finite &= fq.is_finite() && dfq.is_finite();
                for i in 0..g.n {
                    f_loc[i] += wq * fq * lam[i];
                    if want_matrix {
                        for j in 0..g.n {
                            w_loc[i][j] += wq * dfq * lam[i] * lam[j];
                        }
                    }
                }
            });
            if !finite {
                return Err(FemError::NonFiniteCoefficient { element: c });
            }
            for i in 0..g.n {
                if let Some(d) = self.dofs.dof(g.nodes[i]) {
                    load[d] += f_loc[i];
                }
                if want_matrix {
                    for j in 0..g.n {
                        let p = self.slots[c][3 * i + j];
                        if p != NONE {
                            w[p] += w_loc[i][j];
                        }
                    }
                }
            }
        }
        Ok((load, w))
    }

    /// `ℓ_ε(u; φ_i) = ∫ f(u)φ_i − ε∇u·∇φ_i` for interior `i`.
    pub fn load(&self, spec: &ProblemSpec, u: &FemFunction) -> Result<Vec<f64>, FemError> {
        u.check(self.mesh)?;
        let (mut load, _) = self.reaction(spec, &u.coefficients, false)?;
        let ku = self.stiffness_matrix().mul_vec(&self.dofs.restrict(&u.coefficients));
        for (l, k) in load.iter_mut().zip(&ku) {
            *l -= spec.epsilon * k;
        }
        Ok(load)
    }

    /// Matrix of `a_ε(u, k; ·, ·) = M + ε(1 + k)K − k·W_{f′(u)}` and the load.
    pub fn ptc_system(&self, spec: &ProblemSpec, u: &FemFunction, k: f64) -> Result<AssembledSystem, FemError> {
        u.check(self.mesh)?;
        let (mut rhs, w) = self.reaction(spec, &u.coefficients, true)?;
        let eps = spec.epsilon;
        let ku = self.stiffness_matrix().mul_vec(&self.dofs.restrict(&u.coefficients));
        for (l, k) in rhs.iter_mut().zip(&ku) {
            *l -= eps * k;
        }
        Ok(AssembledSystem {
            matrix: self.combine(1.0, eps * (1.0 + k), -k, Some(&w)),
            rhs,
            dof_map: self.dofs.clone(),
        })
    }

    /// Matrix of `F′(u)`: `W_{f′(u)} − εK`.
    pub fn jacobian(&self, spec: &ProblemSpec, u: &[f64]) -> Result<CsrMatrix, FemError> {
        let (_, w) = self.reaction(spec, u, true)?;
        Ok(self.combine(0.0, -spec.epsilon, 1.0, Some(&w)))
    }
}

/// The reduced linear system of one PTC step.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dof_map: DofMap,
}

pub fn assemble_x_inner_product(mesh: &Mesh, epsilon: f64) -> CsrMatrix {
    FemSpace::with_default_quadrature(mesh).x_inner_product(epsilon)
}

pub fn assemble_ptc_system(
    mesh: &Mesh,
    u_n: &FemFunction,
    k_n: f64,
    spec: &ProblemSpec,
    quadrature: &QuadratureRule,
) -> Result<AssembledSystem, FemError> {
    FemSpace::new(mesh, quadrature.clone()).ptc_system(spec, u_n, k_n)
}

/// `⟨F_ε(u), v⟩ = ∫ f(u)v − ε∇u·∇v`, cell by cell.
pub fn evaluate_dual_pairing(
    mesh: &Mesh,
    u: &FemFunction,
    v: &FemFunction,
    spec: &ProblemSpec,
    quadrature: &QuadratureRule,
) -> Result<f64, FemError> {
    if u.mesh_generation != v.mesh_generation {
        return Err(FemError::MeshMismatch { expected: u.mesh_generation, got: v.mesh_generation });
    }
    u.check(mesh)?;
    v.check(mesh)?;
    let mut total = 0.0;
    for c in 0..mesh.cell_count() {
        let g = mesh.cell_geometry(c);
        let nodes = g.nodes();
        let grad = |coef: &[f64]| {
            let mut d = [0.0; 2];
            for (k, &n) in nodes.iter().enumerate() {
                d[0] += coef[n] * g.grads[k][0];
                d[1] += coef[n] * g.grads[k][1];
            }
            d
        };
        let (gu, gv) = (grad(&u.coefficients), grad(&v.coefficients));
        let mut cell = -spec.epsilon * g.measure * (gu[0] * gv[0] + gu[1] * gv[1]);
        for (lam, w) in quadrature.points.iter().zip(&quadrature.weights) {
            let x = mesh.cell_point(c, lam);
            let uq: f64 = nodes.iter().enumerate().map(|(k, &n)| lam[k] * u.coefficients[n]).sum();
            let vq: f64 = nodes.iter().enumerate().map(|(k, &n)| lam[k] * v.coefficients[n]).sum();
            let fq = spec.f(x, uq);
            if !fq.is_finite() {
                return Err(FemError::NonFiniteCoefficient { element: c });
            }
            cell += w * g.measure * fq * vq;
        }
        total += cell;
    }
    Ok(total)
}

/// Transfers `u` to the refined mesh; new vertices take the mean of their
/// parent edge's endpoint values, which reproduces `u` exactly.
pub fn interpolate_to_refined(u: &FemFunction, parent: &Mesh, refinement: &Refinement) -> Result<FemFunction, FemError> {
    let a = &refinement.ancestry;
    if u.mesh_generation != a.parent_generation || parent.generation() != a.parent_generation {
        return Err(FemError::AncestryMismatch {
            parent: a.parent_generation,
            child: a.child_generation,
            got: u.mesh_generation,
        });
    }
    if u.coefficients.len() != a.parent_vertex_count {
        return Err(FemError::LengthMismatch { expected: a.parent_vertex_count, got: u.coefficients.len() });
    }
    let mut coefficients = u.coefficients.clone();
    coefficients.extend(a.midpoints.iter().map(|&[p, q]| 0.5 * (u.coefficients[p] + u.coefficients[q])));
    Ok(FemFunction { mesh_generation: a.child_generation, coefficients })
}

/// `(ε‖∇u‖² + ‖u‖²)^{1/2}` over the given cells (all cells when `None`).
pub fn energy_norm(mesh: &Mesh, u: &FemFunction, epsilon: f64, subdomain: Option<&[usize]>) -> f64 {
    let cell_sq = |c: usize| {
        let g = mesh.cell_geometry(c);
        let (m, k) = (local_mass(&g), local_stiffness(&g));
        let mut s = 0.0;
        for i in 0..g.n {
            for j in 0..g.n {
                s += u.coefficients[g.nodes[i]] * (m[i][j] + epsilon * k[i][j]) * u.coefficients[g.nodes[j]];
            }
        }
        s
    };
    let total: f64 = match subdomain {
        Some(cells) => cells.iter().map(|&c| cell_sq(c)).sum(),
        None => (0..mesh.cell_count()).map(cell_sq).sum(),
    };
    total.max(0.0).sqrt()
}

/// `⫴u* − u_h⫴_ε` by a degree-8 rule per cell.
pub fn energy_error(mesh: &Mesh, u: &FemFunction, epsilon: f64, exact: &ExactSolution) -> f64 {
    let rule = QuadratureRule::for_degree(mesh.dim(), 8);
    let mut total = 0.0;
    for c in 0..mesh.cell_count() {
        let g = mesh.cell_geometry(c);
        let mut gh = [0.0; 2];
        for (k, &n) in g.nodes().iter().enumerate() {
            gh[0] += u.coefficients[n] * g.grads[k][0];
            gh[1] += u.coefficients[n] * g.grads[k][1];
        }
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let x = mesh.cell_point(c, lam);
            let uh: f64 = g.nodes().iter().enumerate().map(|(k, &n)| lam[k] * u.coefficients[n]).sum();
            let e = (exact.value)(x) - uh;
            let ge = (exact.gradient)(x);
            let (dx, dy) = (ge[0] - gh[0], if mesh.dim() == Dim::Two { ge[1] - gh[1] } else { 0.0 });
            total += w * g.measure * (e * e + epsilon * (dx * dx + dy * dy));
        }
    }
    total.sqrt()
}

/// The discrete operator `F_ε` on interior unknowns.
pub struct FemProblem<'a> {
    space: FemSpace<'a>,
    spec: &'a ProblemSpec,
    gram: CsrMatrix,
    stiffness: CsrMatrix,
}

impl<'a> FemProblem<'a> {
    pub fn new(mesh: &'a Mesh, spec: &'a ProblemSpec, quadrature: QuadratureRule) -> Self {
        let space = FemSpace::new(mesh, quadrature);
        let gram = space.x_inner_product(spec.epsilon);
        let stiffness = space.stiffness_matrix();
        Self { space, spec, gram, stiffness }
    }

    pub fn space(&self) -> &FemSpace<'a> {
        &self.space
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    pub fn to_function(&self, x: &[f64]) -> FemFunction {
        FemFunction::from_dofs(self.space.mesh, &self.space.dofs, x)
    }

    pub fn to_dofs(&self, u: &FemFunction) -> Vec<f64> {
        self.space.dofs.restrict(&u.coefficients)
    }

    /// Dual norm of the residual at `x` (one extra solve with the Gram matrix).
    pub fn residual_dual_norm(&self, x: &[f64], contract: &LinearSolveContract) -> Result<f64, PtcError> {
        crate::ptc::dual_norm(self, &self.residual(x)?, contract)
    }
}

impl HilbertProblem for FemProblem<'_> {
    fn dim(&self) -> usize {
        self.space.dofs.len()
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, PtcError> {
        let full = self.space.dofs.extend(x);
        let (mut r, _) = self.space.reaction(self.spec, &full, false)?;
        let kx = self.stiffness.mul_vec(x);
        for (ri, ki) in r.iter_mut().zip(&kx) {
            *ri -= self.spec.epsilon * ki;
        }
        Ok(r)
    }

    fn jacobian(&self, x: &[f64]) -> Result<CsrMatrix, PtcError> {
        Ok(self.space.jacobian(self.spec, &self.space.dofs.extend(x))?)
    }

    fn inner_product(&self) -> &CsrMatrix {
        &self.gram
    }

    fn ptc_operator(&self, x: &[f64], k: f64) -> Result<CsrMatrix, PtcError> {
        let (_, w) = self.space.reaction(self.spec, &self.space.dofs.extend(x), true)?;
        Ok(self.space.combine(1.0, self.spec.epsilon * (1.0 + k), -k, Some(&w)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_initial_mesh, DomainSpec};
    use crate::problems::builtin;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_triangle() -> Mesh {
        Mesh::from_parts(Dim::Two, vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![0, 1, 2], 0).unwrap()
    }

    fn affine(eps: f64) -> ProblemSpec {
        ProblemSpec::new("affine", eps, DomainSpec::unit_square(), |_, u: f64| 1.0 - u, |_, _| -1.0)
    }

    #[test]
    fn reference_element_matrices() {
        let mesh = reference_triangle();
        let g = mesh.cell_geometry(0);
        let k = local_stiffness(&g);
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        let m = local_mass(&g);
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expected[i][j]).abs() <= 1e-12);
                let mij = if i == j { 2.0 } else { 1.0 } / 24.0;
                assert!((m[i][j] - mij).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn affine_reaction_gives_scaled_inner_product() {
        let mesh = build_initial_mesh(&DomainSpec::unit_square(), 3).unwrap();
        let space = FemSpace::with_default_quadrature(&mesh);
        let spec = affine(0.01);
        let u = FemFunction::interpolate(&mesh, |p| p[0] * p[1]);
        let k = 2.5;
        let sys = space.ptc_system(&spec, &u, k).unwrap();
        let x = space.x_inner_product(0.01);
        for i in 0..x.nrows() {
            for (j, v) in x.row(i) {
                assert!((sys.matrix.get(i, j) - (1.0 + k) * v).abs() <= 1e-12 * (1.0 + k) * x.max_abs());
            }
        }
        let sys0 = space.ptc_system(&spec, &u, 0.0).unwrap();
        assert_eq!(sys0.matrix, x);
        assert!(sys.matrix.symmetry_defect() <= 1e-12);
    }

    #[test]
    fn load_of_constant_source_is_hat_integral() {
        let mesh = build_initial_mesh(&DomainSpec::unit_square(), 2).unwrap();
        let space = FemSpace::with_default_quadrature(&mesh);
        let spec = affine(1.0);
        let rhs = space.load(&spec, &FemFunction::zeros(&mesh)).unwrap();
        for (d, r) in rhs.iter().enumerate() {
            let v = space.dofs().vertex(d);
            let area: f64 = (0..mesh.cell_count())
                .filter(|&c| mesh.cell(c).contains(&v))
                .map(|c| mesh.cell_geometry(c).measure / 3.0)
                .sum();
            assert_relative_eq!(*r, area, max_relative = 1e-12);
        }
    }

    #[test]
    fn full_stiffness_annihilates_constants() {
        let mesh = build_initial_mesh(&DomainSpec::Square { lo: -1.0, hi: 1.0 }, 3).unwrap();
        let mut row_sums = vec![0.0; mesh.vertex_count()];
        for c in 0..mesh.cell_count() {
            let g = mesh.cell_geometry(c);
            let k = local_stiffness(&g);
            for i in 0..3 {
                row_sums[g.nodes[i]] += k[i].iter().sum::<f64>();
            }
        }
        assert!(row_sums.iter().all(|s| s.abs() <= 1e-12));
    }

    #[test]
    fn pairing_zero_for_zero_ginzburg_landau_and_linear_in_v() {
        let spec = builtin("ginzburg-landau", 0.1).unwrap();
        let mesh = build_initial_mesh(&spec.domain, 2).unwrap();
        let q = QuadratureRule::default_for(Dim::Two);
        let v = FemFunction::interpolate(&mesh, |p| 1.0 + p[0]);
        assert_eq!(evaluate_dual_pairing(&mesh, &FemFunction::zeros(&mesh), &v, &spec, &q).unwrap(), 0.0);

        let u = FemFunction::interpolate(&mesh, |p| 0.5 - p[0] * p[1]);
        let v1 = FemFunction::interpolate(&mesh, |p| p[0] - p[1]);
        let v2 = FemFunction::interpolate(&mesh, |p| 1.0 - p[1] * p[1]);
        let combo = FemFunction {
            mesh_generation: 0,
            coefficients: v1.coefficients.iter().zip(&v2.coefficients).map(|(a, b)| 2.0 * a - 3.0 * b).collect(),
        };
        let p = |v: &FemFunction| evaluate_dual_pairing(&mesh, &u, v, &spec, &q).unwrap();
        assert_relative_eq!(p(&combo), 2.0 * p(&v1) - 3.0 * p(&v2), max_relative = 1e-12);
        // the assembled load is the same functional
        let space = FemSpace::new(&mesh, q.clone());
        let load = space.load(&spec, &u).unwrap();
        let dot: f64 = load.iter().zip(space.dofs().restrict(&v1.coefficients)).map(|(a, b)| a * b).sum();
        assert_relative_eq!(dot, p(&v1), max_relative = 1e-12);
    }

    #[test]
    fn pairing_of_center_hat_matches_closed_form() {
        // one interior vertex; the hat φ has ∫φ = 1/3, ∫φ² = 1/6, ∫|∇φ|² = 4
        let mesh = build_initial_mesh(&DomainSpec::unit_square(), 1).unwrap();
        let eps = 0.3;
        let hat = FemFunction::interpolate(&mesh, |_| 1.0);
        let q = QuadratureRule::triangle(10);
        let val = evaluate_dual_pairing(&mesh, &hat, &hat, &affine(eps), &q).unwrap();
        assert_relative_eq!(val, 1.0 / 3.0 - 1.0 / 6.0 - 4.0 * eps, max_relative = 1e-12);
        let other = FemFunction { mesh_generation: 1, coefficients: hat.coefficients.clone() };
        assert!(matches!(
            evaluate_dual_pairing(&mesh, &hat, &other, &affine(eps), &q),
            Err(FemError::MeshMismatch { .. })
        ));
    }

    #[test]
    fn interpolation_reproduces_the_parent_function() {
        let mesh = build_initial_mesh(&DomainSpec::unit_square(), 2).unwrap();
        let u = FemFunction::interpolate(&mesh, |p| (3.0 * p[0]).sin() + p[1] * p[1]);
        let r = mesh.refine(&[0, 5, 11]);
        let child = interpolate_to_refined(&u, &mesh, &r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let a = u.evaluate(&mesh, p).unwrap();
            let b = child.evaluate(&r.mesh, p).unwrap();
            assert!((a - b).abs() <= 1e-13, "{a} vs {b}");
        }
        let zero = interpolate_to_refined(&FemFunction::zeros(&mesh), &mesh, &r).unwrap();
        assert!(zero.coefficients.iter().all(|&c| c == 0.0));
        assert!(matches!(
            interpolate_to_refined(&child, &mesh, &r),
            Err(FemError::AncestryMismatch { .. })
        ));
    }

    #[test]
    fn hat_interpolation_averages_edge_endpoints() {
        let mesh = build_initial_mesh(&DomainSpec::unit_square(), 2).unwrap();
        let v = (0..mesh.vertex_count()).find(|&v| !mesh.is_boundary_vertex(v)).unwrap();
        let mut hat = FemFunction::zeros(&mesh);
        hat.coefficients[v] = 1.0;
        let r = mesh.refine(&(0..mesh.cell_count()).collect::<Vec<_>>());
        let child = interpolate_to_refined(&hat, &mesh, &r).unwrap();
        for (i, &[a, b]) in r.ancestry.midpoints.iter().enumerate() {
            let expected = if a == v || b == v { 0.5 } else { 0.0 };
            assert_eq!(child.coefficients[mesh.vertex_count() + i], expected);
        }
    }

    #[test]
    fn energy_norm_matches_gram_matrix() {
        let mesh = build_initial_mesh(&DomainSpec::unit_square(), 3).unwrap();
        let eps = 0.05;
        assert_eq!(energy_norm(&mesh, &FemFunction::zeros(&mesh), eps, None), 0.0);
        let u = FemFunction::interpolate(&mesh, |p| p[0] * (1.0 - p[1]));
        let space = FemSpace::with_default_quadrature(&mesh);
        let x = space.dofs().restrict(&u.coefficients);
        let q = space.x_inner_product(eps).bilinear(&x, &x);
        assert_relative_eq!(energy_norm(&mesh, &u, eps, None).powi(2), q, max_relative = 1e-12);
        let half: Vec<usize> = (0..mesh.cell_count()).filter(|c| c % 2 == 0).collect();
        let rest: Vec<usize> = (0..mesh.cell_count()).filter(|c| c % 2 == 1).collect();
        let split = energy_norm(&mesh, &u, eps, Some(&half)).powi(2) + energy_norm(&mesh, &u, eps, Some(&rest)).powi(2);
        assert_relative_eq!(split, q, max_relative = 1e-12);
    }

    #[test]
    fn one_dimensional_energy_converges() {
        let mesh = build_initial_mesh(&DomainSpec::Interval { a: 0.0, b: 1.0 }, 128).unwrap();
        let u = FemFunction::interpolate(&mesh, |p| p[0] * (1.0 - p[0]));
        let l2 = energy_norm(&mesh, &u, 0.0, None).powi(2);
        let h1 = (energy_norm(&mesh, &u, 1.0, None).powi(2) - l2).max(0.0);
        assert!((l2 - 1.0 / 30.0).abs() <= 1e-3 / 30.0);
        assert!((h1 - 1.0 / 3.0).abs() <= 1e-3 / 3.0);
    }

    #[test]
    fn hilbert_interface_agrees_with_assembly() {
        let spec = builtin("sine-gordon", 0.01).unwrap();
        let mesh = build_initial_mesh(&spec.domain, 3).unwrap();
        let problem = FemProblem::new(&mesh, &spec, QuadratureRule::default_for(Dim::Two));
        let u = FemFunction::interpolate(&mesh, |p| p[0] + 0.3);
        let x = problem.to_dofs(&u);
        let sys = problem.space().ptc_system(&spec, &u, 0.7).unwrap();
        let a = problem.ptc_operator(&x, 0.7).unwrap();
        assert_eq!(a, sys.matrix);
        assert_eq!(problem.residual(&x).unwrap(), sys.rhs);
        let generic = problem.inner_product().add_scaled(-0.7, &problem.jacobian(&x).unwrap());
        for i in 0..a.nrows() {
            for (j, v) in a.row(i) {
                assert!((generic.get(i, j) - v).abs() <= 1e-14);
            }
        }
    }
}
