//! Legacy VTK (ASCII, unstructured grid) export of tetrahedral meshes with
//! nodal scalar fields.

use crate::mesh::TetMesh;
use std::io::{self, Write};

const VTK_TETRA: u8 = 10;

/// Write `mesh` with the given point fields. Every field must have one value
/// per node; names may not contain whitespace.
pub fn write_vtk<W: Write>(mut w: W, title: &str, mesh: &TetMesh, fields: &[(&str, &[f64])]) -> io::Result<()> {
    for (name, vals) in fields {
        if vals.len() != mesh.nodes.len() || name.is_empty() || name.contains(char::is_whitespace) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("bad point field '{name}'")));
        }
    }
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.nodes.len())?;
    for p in &mesh.nodes {
        writeln!(w, "{:e} {:e} {:e}", p[0], p[1], p[2])?;
    }
    writeln!(w, "CELLS {} {}", mesh.tets.len(), 5 * mesh.tets.len())?;
    for t in &mesh.tets {
        writeln!(w, "4 {} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.tets.len())?;
    for _ in &mesh.tets {
        writeln!(w, "{VTK_TETRA}")?;
    }
    if !fields.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.nodes.len())?;
        for (name, vals) in fields {
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in vals.iter() {
                writeln!(w, "{v:e}")?;
            }
        }
    }
    w.flush()
}

pub fn save_vtk(path: &std::path::Path, title: &str, mesh: &TetMesh, fields: &[(&str, &[f64])]) -> io::Result<()> {
    let f = std::fs::File::create(path)?;
    write_vtk(io::BufWriter::new(f), title, mesh, fields)
}
