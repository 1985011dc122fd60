//! Conforming simplicial meshes: intervals in 1D, triangles in 2D.
//!
//! Cells are stored flat with `dim + 1` vertex indices each. In 2D the vertex
//! order carries the newest-vertex-bisection state: a cell `[v0, v1, v2]` is
//! counter-clockwise, `v0` is its newest vertex and `v1–v2` its refinement
//! edge. Local facet `j` of a cell is the facet opposite local vertex `j`.
//!
//! Facets (interior nodes in 1D, edges in 2D) are numbered in order of first
//! appearance while sweeping cells by ascending id, and the lower-id
//! neighbour of an interior facet is its "sharp" side.

mod refine;
pub mod vtk;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use refine::{Refinement, VertexAncestry};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    pub fn nodes_per_cell(self) -> usize {
        match self {
            Dim::One => 2,
            Dim::Two => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainSpec {
    Interval { a: f64, b: f64 },
    Square { lo: f64, hi: f64 },
    Polygon { vertices: Vec<Point> },
}

impl DomainSpec {
    pub fn unit_square() -> Self {
        DomainSpec::Square { lo: 0.0, hi: 1.0 }
    }

    pub fn dim(&self) -> Dim {
        match self {
            DomainSpec::Interval { .. } => Dim::One,
            _ => Dim::Two,
        }
    }

    /// Length or area of the domain (zero for unsupported polygons).
    pub fn measure(&self) -> f64 {
        match self {
            DomainSpec::Interval { a, b } => b - a,
            DomainSpec::Square { lo, hi } => (hi - lo) * (hi - lo),
            DomainSpec::Polygon { .. } => 0.0,
        }
    }

    pub fn center(&self) -> Point {
        match self {
            DomainSpec::Interval { a, b } => [0.5 * (a + b), 0.0],
            DomainSpec::Square { lo, hi } => [0.5 * (lo + hi); 2],
            DomainSpec::Polygon { vertices } => {
                let n = vertices.len().max(1) as f64;
                let s = vertices.iter().fold([0.0, 0.0], |s, p| [s[0] + p[0], s[1] + p[1]]);
                [s[0] / n, s[1] / n]
            }
        }
    }

    /// Euclidean distance from `p` to the boundary of the domain.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        match self {
            DomainSpec::Interval { a, b } => (p[0] - a).abs().min((b - p[0]).abs()),
            DomainSpec::Square { lo, hi } => {
                let dx = (p[0] - lo).min(hi - p[0]);
                let dy = (p[1] - lo).min(hi - p[1]);
                dx.min(dy).abs()
            }
            DomainSpec::Polygon { .. } => f64::NAN,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("unsupported domain {0:?}: only intervals and axis-aligned squares are meshed")]
    UnsupportedDomain(DomainSpec),
    #[error("invalid domain bounds {lo} >= {hi}")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("mesh resolution must be at least 1")]
    ZeroResolution,
    #[error("facet {0} lies on the boundary and has no jump")]
    BoundaryFacet(usize),
    #[error("cell {cell} has non-positive measure {measure:e}")]
    DegenerateCell { cell: usize, measure: f64 },
    #[error("facet {nodes:?} is shared by more than two cells")]
    NonConforming { nodes: [usize; 2] },
    #[error("vertex index {index} out of range for {count} vertices")]
    VertexOutOfRange { index: usize, count: usize },
}

/// A node (1D) or edge (2D) of the mesh with its one or two neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Facet {
    /// Endpoints; both entries equal the node in 1D.
    pub nodes: [usize; 2],
    pub sharp: usize,
    pub flat: Option<usize>,
}

impl Facet {
    pub fn is_interior(&self) -> bool {
        self.flat.is_some()
    }
}

/// Geometry of an interior facet as used by the gradient jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetGeometry {
    pub facet: usize,
    /// Edge length in 2D, mean of the adjacent cell lengths in 1D.
    pub h: f64,
    /// Unit outward normal of the sharp cell.
    pub normal: Point,
    pub sharp: usize,
    pub flat: usize,
    pub nodes: [usize; 2],
}

/// Affine data of one cell; entries past `n` are unused.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub nodes: [usize; 3],
    pub n: usize,
    pub measure: f64,
    pub diameter: f64,
    /// Gradients of the barycentric coordinates (constant on the cell).
    pub grads: [Point; 3],
}

impl CellGeometry {
    pub fn nodes(&self) -> &[usize] {
        &self.nodes[..self.n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: Dim,
    vertices: Vec<Point>,
    cells: Vec<usize>,
    facets: Vec<Facet>,
    cell_facets: Vec<usize>,
    boundary: Vec<bool>,
    generation: usize,
    domain_measure: f64,
}

impl Mesh {
    /// Assembles a mesh from vertices and cells, building the facet tables.
    ///
    /// 2D cells must be counter-clockwise; their stored order is taken as the
    /// bisection state (`cells[3i]` newest vertex).
    pub fn from_parts(
        dim: Dim,
        vertices: Vec<Point>,
        cells: Vec<usize>,
        generation: usize,
    ) -> Result<Self, MeshError> {
        let npc = dim.nodes_per_cell();
        assert_eq!(cells.len() % npc, 0, "cell array length must be a multiple of {npc}");
        if let Some(&index) = cells.iter().find(|&&v| v >= vertices.len()) {
            return Err(MeshError::VertexOutOfRange { index, count: vertices.len() });
        }
        let ncells = cells.len() / npc;

        let mut mesh = Mesh {
            dim,
            vertices,
            cells,
            facets: Vec::new(),
            cell_facets: vec![usize::MAX; ncells * npc],
            boundary: Vec::new(),
            generation,
            domain_measure: 0.0,
        };

        let mut total = 0.0;
        for c in 0..ncells {
            total += mesh.signed_measure(c);
        }
        mesh.domain_measure = total;
        for c in 0..ncells {
            let m = mesh.signed_measure(c);
            if !(m > 1e-14 * total) {
                return Err(MeshError::DegenerateCell { cell: c, measure: m });
            }
        }

        let mut index: HashMap<[usize; 2], usize> = HashMap::with_capacity(ncells * npc);
        for c in 0..ncells {
            for j in 0..npc {
                let nodes = mesh.local_facet_nodes(c, j);
                let key = [nodes[0].min(nodes[1]), nodes[0].max(nodes[1])];
                match index.get(&key) {
                    Some(&f) => {
                        let facet = &mut mesh.facets[f];
                        if facet.flat.is_some() {
                            return Err(MeshError::NonConforming { nodes: key });
                        }
                        facet.flat = Some(c);
                        mesh.cell_facets[c * npc + j] = f;
                    }
                    None => {
                        let f = mesh.facets.len();
                        mesh.facets.push(Facet { nodes: key, sharp: c, flat: None });
                        index.insert(key, f);
                        mesh.cell_facets[c * npc + j] = f;
                    }
                }
            }
        }

        let mut boundary = vec![false; mesh.vertices.len()];
        for facet in mesh.facets.iter().filter(|f| f.flat.is_none()) {
            boundary[facet.nodes[0]] = true;
            boundary[facet.nodes[1]] = true;
        }
        mesh.boundary = boundary;
        Ok(mesh)
    }

    fn local_facet_nodes(&self, cell: usize, j: usize) -> [usize; 2] {
        let c = self.cell(cell);
        match self.dim {
            Dim::One => [c[1 - j]; 2],
            Dim::Two => [c[(j + 1) % 3], c[(j + 2) % 3]],
        }
    }

    fn signed_measure(&self, cell: usize) -> f64 {
        let c = self.cell(cell);
        match self.dim {
            Dim::One => self.vertices[c[1]][0] - self.vertices[c[0]][0],
            Dim::Two => {
                let [p0, p1, p2] = [c[0], c[1], c[2]].map(|v| self.vertices[v]);
                0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]))
            }
        }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len() / self.dim.nodes_per_cell()
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let npc = self.dim.nodes_per_cell();
        &self.cells[c * npc..(c + 1) * npc]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.cells.chunks_exact(self.dim.nodes_per_cell())
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Facet ids of cell `c`, local facet `j` opposite local vertex `j`.
    pub fn cell_facets(&self, c: usize) -> &[usize] {
        let npc = self.dim.nodes_per_cell();
        &self.cell_facets[c * npc..(c + 1) * npc]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    /// Number of interior vertices, i.e. P1 degrees of freedom.
    pub fn dof_count(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    /// Sum of cell measures.
    pub fn total_measure(&self) -> f64 {
        self.domain_measure
    }

    /// Refinement edge of a triangle (the edge opposite its newest vertex).
    pub fn refinement_edge(&self, c: usize) -> Option<[usize; 2]> {
        match self.dim {
            Dim::One => None,
            Dim::Two => {
                let cell = self.cell(c);
                Some([cell[1], cell[2]])
            }
        }
    }

    pub fn cell_geometry(&self, c: usize) -> CellGeometry {
        let cell = self.cell(c);
        match self.dim {
            Dim::One => {
                let (a, b) = (self.vertices[cell[0]][0], self.vertices[cell[1]][0]);
                let h = b - a;
                CellGeometry {
                    nodes: [cell[0], cell[1], usize::MAX],
                    n: 2,
                    measure: h,
                    diameter: h,
                    grads: [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]],
                }
            }
            Dim::Two => {
                let p = [cell[0], cell[1], cell[2]].map(|v| self.vertices[v]);
                let twice_area =
                    (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
                let mut grads = [[0.0; 2]; 3];
                for i in 0..3 {
                    let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                    grads[i] = [(p[j][1] - p[k][1]) / twice_area, (p[k][0] - p[j][0]) / twice_area];
                }
                let diameter = (0..3)
                    .map(|i| distance(p[i], p[(i + 1) % 3]))
                    .fold(0.0, f64::max);
                CellGeometry {
                    nodes: [cell[0], cell[1], cell[2]],
                    n: 3,
                    measure: 0.5 * twice_area,
                    diameter,
                    grads,
                }
            }
        }
    }

    /// Physical point with barycentric coordinates `bary` in cell `c`.
    pub fn cell_point(&self, c: usize, bary: &[f64; 3]) -> Point {
        let mut x = [0.0; 2];
        for (k, &v) in self.cell(c).iter().enumerate() {
            x[0] += bary[k] * self.vertices[v][0];
            x[1] += bary[k] * self.vertices[v][1];
        }
        x
    }

    /// Barycentric coordinates of `p` with respect to cell `c`.
    pub fn barycentric(&self, c: usize, p: Point) -> [f64; 3] {
        let g = self.cell_geometry(c);
        let mut bary = [0.0; 3];
        for k in 0..g.n {
            let x0 = self.vertices[g.nodes[k]];
            // λ_k(p) = 1 + ∇λ_k · (p − x_k)
            bary[k] = 1.0 + g.grads[k][0] * (p[0] - x0[0]) + g.grads[k][1] * (p[1] - x0[1]);
        }
        bary
    }

    /// First cell containing `p` (within `tol` in barycentric terms).
    pub fn locate(&self, p: Point, tol: f64) -> Option<usize> {
        (0..self.cell_count()).find(|&c| {
            let n = self.dim.nodes_per_cell();
            self.barycentric(c, p)[..n].iter().all(|&l| l >= -tol)
        })
    }

    pub fn facet_jump_frame(&self, facet: usize) -> Result<FacetGeometry, MeshError> {
        let f = self.facets[facet];
        let flat = f.flat.ok_or(MeshError::BoundaryFacet(facet))?;
        let sharp_cell = self.cell(f.sharp);
        match self.dim {
            Dim::One => {
                let x = self.vertices[f.nodes[0]][0];
                let other = sharp_cell.iter().copied().find(|&v| v != f.nodes[0]).unwrap();
                let normal = [(x - self.vertices[other][0]).signum(), 0.0];
                let h = 0.5 * (self.cell_geometry(f.sharp).measure + self.cell_geometry(flat).measure);
                Ok(FacetGeometry { facet, h, normal, sharp: f.sharp, flat, nodes: f.nodes })
            }
            Dim::Two => {
                let (a, b) = (self.vertices[f.nodes[0]], self.vertices[f.nodes[1]]);
                let len = distance(a, b);
                let mut normal = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
                let opposite = sharp_cell.iter().copied().find(|v| !f.nodes.contains(v)).unwrap();
                let c = self.vertices[opposite];
                if normal[0] * (c[0] - a[0]) + normal[1] * (c[1] - a[1]) > 0.0 {
                    normal = [-normal[0], -normal[1]];
                }
                Ok(FacetGeometry { facet, h: len, normal, sharp: f.sharp, flat, nodes: f.nodes })
            }
        }
    }

    /// Smallest interior angle over all triangles, in radians (π for 1D meshes).
    pub fn min_angle(&self) -> f64 {
        if self.dim == Dim::One {
            return std::f64::consts::PI;
        }
        let mut worst = std::f64::consts::PI;
        for c in self.cells() {
            let p = [c[0], c[1], c[2]].map(|v| self.vertices[v]);
            for i in 0..3 {
                let u = sub(p[(i + 1) % 3], p[i]);
                let w = sub(p[(i + 2) % 3], p[i]);
                let cos = (u[0] * w[0] + u[1] * w[1]) / (norm(u) * norm(w));
                worst = worst.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        worst
    }
}

pub(crate) fn distance(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Structured starting mesh: `resolution` uniform intervals in 1D, or a
/// criss-cross triangulation of `resolution × resolution` squares (each square
/// split into four triangles through its center) in 2D.
pub fn build_initial_mesh(domain: &DomainSpec, resolution: usize) -> Result<Mesh, MeshError> {
    if resolution == 0 {
        return Err(MeshError::ZeroResolution);
    }
    match *domain {
        DomainSpec::Interval { a, b } => {
            if !(a < b) {
                return Err(MeshError::InvalidBounds { lo: a, hi: b });
            }
            let n = resolution;
            let h = (b - a) / n as f64;
            let vertices = (0..=n)
                .map(|i| [if i == n { b } else { a + i as f64 * h }, 0.0])
                .collect();
            let cells = (0..n).flat_map(|i| [i, i + 1]).collect();
            Mesh::from_parts(Dim::One, vertices, cells, 0)
        }
        DomainSpec::Square { lo, hi } => {
            if !(lo < hi) {
                return Err(MeshError::InvalidBounds { lo, hi });
            }
            let n = resolution;
            let h = (hi - lo) / n as f64;
            let coord = |i: usize| if i == n { hi } else { lo + i as f64 * h };
            let mut vertices = Vec::with_capacity((n + 1) * (n + 1) + n * n);
            for j in 0..=n {
                for i in 0..=n {
                    vertices.push([coord(i), coord(j)]);
                }
            }
            let grid = |i: usize, j: usize| j * (n + 1) + i;
            let mut cells = Vec::with_capacity(12 * n * n);
            for j in 0..n {
                for i in 0..n {
                    let m = vertices.len();
                    vertices.push([lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h]);
                    let (c00, c10, c11, c01) = (grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1));
                    for (a, b) in [(c00, c10), (c10, c11), (c11, c01), (c01, c00)] {
                        cells.extend_from_slice(&[m, a, b]);
                    }
                }
            }
            orient_longest_edge(&vertices, &mut cells);
            Mesh::from_parts(Dim::Two, vertices, cells, 0)
        }
        DomainSpec::Polygon { .. } => Err(MeshError::UnsupportedDomain(domain.clone())),
    }
}

/// Rotates each triangle cyclically so that its longest edge becomes the
/// refinement edge `v1–v2` (ties resolved toward the lowest local index).
pub fn orient_longest_edge(vertices: &[Point], cells: &mut [usize]) {
    for cell in cells.chunks_exact_mut(3) {
        let len = |j: usize| distance(vertices[cell[(j + 1) % 3]], vertices[cell[(j + 2) % 3]]);
        let mut best = 0;
        for j in 1..3 {
            if len(j) > len(best) * (1.0 + 1e-12) {
                best = j;
            }
        }
        cell.rotate_left(best);
    }
}
