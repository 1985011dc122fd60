use std::collections::HashMap;

use super::{Dim, Mesh, Point};

/// Where the vertices of a refined mesh came from. Parent vertices keep
/// their ids; vertex `parent_vertex_count + i` is the midpoint of
/// `midpoints[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexAncestry {
    pub parent_generation: usize,
    pub child_generation: usize,
    pub parent_vertex_count: usize,
    pub midpoints: Vec<[usize; 2]>,
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub mesh: Mesh,
    pub ancestry: VertexAncestry,
    /// Parent cell of every child cell.
    pub cell_parent: Vec<usize>,
}

impl Mesh {
    /// Bisects every marked cell at least once and closes the result to a
    /// conforming mesh. 2D cells are split by newest-vertex bisection.
    ///
    /// Panics if a marked id is out of range.
    pub fn refine(&self, marked: &[usize]) -> Refinement {
        let ncells = self.cell_count();
        for &c in marked {
            assert!(c < ncells, "marked cell {c} out of range ({ncells} cells)");
        }
        match self.dim {
            Dim::One => self.refine_intervals(marked),
            Dim::Two => self.refine_triangles(marked),
        }
    }

    fn refine_intervals(&self, marked: &[usize]) -> Refinement {
        let mut split = vec![false; self.cell_count()];
        for &c in marked {
            split[c] = true;
        }
        let mut vertices = self.vertices.clone();
        let mut midpoints = Vec::new();
        let mut cells = Vec::with_capacity(self.cells.len() + 2 * marked.len());
        let mut cell_parent = Vec::with_capacity(self.cell_count() + marked.len());
        for (c, cell) in self.cells().enumerate() {
            let (a, b) = (cell[0], cell[1]);
            if split[c] {
                let m = vertices.len();
                vertices.push(midpoint(self.vertices[a], self.vertices[b]));
                midpoints.push([a, b]);
                cells.extend_from_slice(&[a, m, m, b]);
                cell_parent.extend_from_slice(&[c, c]);
            } else {
                cells.extend_from_slice(&[a, b]);
                cell_parent.push(c);
            }
        }
        self.finish(vertices, cells, midpoints, cell_parent)
    }

    fn refine_triangles(&self, marked: &[usize]) -> Refinement {
        let nfacets = self.facets.len();
        let mut edge_marked = vec![false; nfacets];
        let mut queue: Vec<usize> = Vec::new();

        let mark = |f: usize, edge_marked: &mut Vec<bool>, queue: &mut Vec<usize>| {
            if !edge_marked[f] {
                edge_marked[f] = true;
                let facet = self.facets[f];
                queue.push(facet.sharp);
                if let Some(flat) = facet.flat {
                    queue.push(flat);
                }
            }
        };
        for &c in marked {
            mark(self.cell_facets(c)[0], &mut edge_marked, &mut queue);
        }
        // closure: any cell with a marked edge must have its refinement edge marked
        while let Some(c) = queue.pop() {
            let facets = self.cell_facets(c);
            if !edge_marked[facets[0]] && facets[1..].iter().any(|&f| edge_marked[f]) {
                mark(facets[0], &mut edge_marked, &mut queue);
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoints = Vec::new();
        let mut midpoint_of: HashMap<[usize; 2], usize> = HashMap::new();
        for (f, facet) in self.facets.iter().enumerate() {
            if edge_marked[f] {
                let [a, b] = facet.nodes;
                midpoint_of.insert(facet.nodes, vertices.len());
                vertices.push(midpoint(self.vertices[a], self.vertices[b]));
                midpoints.push([a, b]);
            }
        }

        let lookup = |a: usize, b: usize| midpoint_of.get(&[a.min(b), a.max(b)]).copied();
        let mut cells = Vec::with_capacity(self.cells.len() + 9 * midpoints.len());
        let mut cell_parent = Vec::with_capacity(self.cell_count() + 3 * midpoints.len());
        for (c, cell) in self.cells().enumerate() {
            let before = cells.len();
            bisect([cell[0], cell[1], cell[2]], &lookup, &mut cells);
            cell_parent.extend(std::iter::repeat_n(c, (cells.len() - before) / 3));
        }
        self.finish(vertices, cells, midpoints, cell_parent)
    }

    fn finish(
        &self,
        vertices: Vec<Point>,
        cells: Vec<usize>,
        midpoints: Vec<[usize; 2]>,
        cell_parent: Vec<usize>,
    ) -> Refinement {
        let mesh = Mesh::from_parts(self.dim, vertices, cells, self.generation + 1)
            .expect("bisection of a valid mesh yields a valid mesh");
        Refinement {
            ancestry: VertexAncestry {
                parent_generation: self.generation,
                child_generation: mesh.generation,
                parent_vertex_count: self.vertex_count(),
                midpoints,
            },
            mesh,
            cell_parent,
        }
    }
}

/// Splits `[newest, a, b]` through the midpoint of `a–b` when that edge is
/// marked, recursing into the children (whose refinement edges are the
/// parent's other two edges).
fn bisect(cell: [usize; 3], midpoint_of: &impl Fn(usize, usize) -> Option<usize>, out: &mut Vec<usize>) {
    let [v0, v1, v2] = cell;
    match midpoint_of(v1, v2) {
        None => out.extend_from_slice(&cell),
        Some(m) => {
            bisect([m, v0, v1], midpoint_of, out);
            bisect([m, v2, v0], midpoint_of, out);
        }
    }
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}
