//! Legacy ASCII VTK export (`UNSTRUCTURED_GRID`), vertices in id order.

use std::io::{self, Write};

use super::{Dim, Mesh};

const VTK_LINE: u8 = 3;
const VTK_TRIANGLE: u8 = 5;

/// Writes points, cells and cell types.
pub fn write_mesh<W: Write>(mesh: &Mesh, title: &str, w: &mut W) -> io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.vertex_count())?;
    for p in mesh.vertices() {
        writeln!(w, "{} {} 0", p[0], p[1])?;
    }
    let npc = mesh.dim().nodes_per_cell();
    let ncells = mesh.cell_count();
    writeln!(w, "CELLS {} {}", ncells, ncells * (npc + 1))?;
    for cell in mesh.cells() {
        write!(w, "{npc}")?;
        for v in cell {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    let cell_type = match mesh.dim() {
        Dim::One => VTK_LINE,
        Dim::Two => VTK_TRIANGLE,
    };
    writeln!(w, "CELL_TYPES {ncells}")?;
    for _ in 0..ncells {
        writeln!(w, "{cell_type}")?;
    }
    Ok(())
}

/// Mesh plus one nodal scalar field as `POINT_DATA`.
pub fn write_solution<W: Write>(
    mesh: &Mesh,
    name: &str,
    values: &[f64],
    title: &str,
    w: &mut W,
) -> io::Result<()> {
    if values.len() != mesh.vertex_count() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("{} nodal values for {} vertices", values.len(), mesh.vertex_count()),
        ));
    }
    write_mesh(mesh, title, w)?;
    writeln!(w, "POINT_DATA {}", values.len())?;
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(w, "{v}")?;
    }
    Ok(())
}
