//! Legacy ASCII VTK output of quadtree meshes and fields.

use crate::forest::MeshView;
use crate::Result;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

const VTK_QUAD: u8 = 9;

/// Per-cell and per-vertex arrays written alongside the mesh.
#[derive(Default)]
pub struct VtkFields<'a> {
    pub cell_scalars: Vec<(&'a str, &'a [f64])>,
    pub point_scalars: Vec<(&'a str, &'a [f64])>,
}

/// Write `mesh` as an unstructured grid of quads; cell data always includes
/// `level` and `owner`.
pub fn write_vtk<W: Write>(mut w: W, title: &str, mesh: &MeshView, fields: &VtkFields) -> Result<()> {
    let (nv, nc) = (mesh.n_vertices(), mesh.n_leaves());
    for (name, v) in &fields.cell_scalars {
        check_len(name, v.len(), nc)?;
    }
    for (name, v) in &fields.point_scalars {
        check_len(name, v.len(), nv)?;
    }
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {nv} double")?;
    for [x, y] in &mesh.vertices {
        writeln!(w, "{x:e} {y:e} 0")?;
    }
    writeln!(w, "CELLS {nc} {}", 5 * nc)?;
    for c in &mesh.cell_to_vertex {
        writeln!(w, "4 {} {} {} {}", c[0], c[1], c[3], c[2])?;
    }
    writeln!(w, "CELL_TYPES {nc}")?;
    for _ in 0..nc {
        writeln!(w, "{VTK_QUAD}")?;
    }
    writeln!(w, "CELL_DATA {nc}")?;
    writeln!(w, "SCALARS level int 1\nLOOKUP_TABLE default")?;
    for c in &mesh.leaves {
        writeln!(w, "{}", c.level)?;
    }
    writeln!(w, "SCALARS owner int 1\nLOOKUP_TABLE default")?;
    for o in &mesh.owner {
        writeln!(w, "{o}")?;
    }
    for (name, v) in &fields.cell_scalars {
        write_scalars(&mut w, name, v)?;
    }
    if !fields.point_scalars.is_empty() {
        writeln!(w, "POINT_DATA {nv}")?;
        for (name, v) in &fields.point_scalars {
            write_scalars(&mut w, name, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_vtk_file(path: impl AsRef<Path>, title: &str, mesh: &MeshView, fields: &VtkFields) -> Result<()> {
    write_vtk(BufWriter::new(File::create(path)?), title, mesh, fields)
}

fn check_len(name: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(crate::Error::InvalidArgument(format!(
            "field '{name}' has {got} values, expected {expected}"
        )));
    }
    Ok(())
}

fn write_scalars<W: Write>(w: &mut W, name: &str, v: &[f64]) -> Result<()> {
    let name: String = name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default")?;
    for x in v {
        writeln!(w, "{x:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{Forest, Rect};

    fn sections(text: &str) -> Vec<&str> {
        text.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_uppercase())).collect()
    }

    #[test]
    fn two_by_two_layout() {
        let mesh = Forest::new_brick(1, 1, Rect::unit(), 1).unwrap().extract_mesh(None).unwrap();
        let eta = vec![0.5; 4];
        let u: Vec<f64> = mesh.vertices.iter().map(|p| p[0] + p[1]).collect();
        let fields = VtkFields { cell_scalars: vec![("eta_k", &eta)], point_scalars: vec![("u_h", &u)] };
        let mut buf = Vec::new();
        write_vtk(&mut buf, "demo\nsecond line dropped", &mesh, &fields).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[1], "demo");
        assert_eq!(
            sections(&text),
            [
                "ASCII",
                "DATASET UNSTRUCTURED_GRID",
                "POINTS 9 double",
                "CELLS 4 20",
                "CELL_TYPES 4",
                "CELL_DATA 4",
                "SCALARS level int 1",
                "LOOKUP_TABLE default",
                "SCALARS owner int 1",
                "LOOKUP_TABLE default",
                "SCALARS eta_k double 1",
                "LOOKUP_TABLE default",
                "POINT_DATA 9",
                "SCALARS u_h double 1",
                "LOOKUP_TABLE default",
            ]
        );
        let types = lines.iter().position(|l| l.starts_with("CELL_TYPES")).unwrap();
        assert!(lines[types + 1..types + 5].iter().all(|l| *l == "9"));
    }

    #[test]
    fn quads_are_counter_clockwise() {
        let mesh = Forest::new_brick(1, 1, Rect::unit(), 2).unwrap().extract_mesh(None).unwrap();
        let mut buf = Vec::new();
        write_vtk(&mut buf, "t", &mesh, &VtkFields::default()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let start = text.lines().position(|l| l.starts_with("CELLS")).unwrap();
        for line in text.lines().skip(start + 1).take(mesh.n_leaves()) {
            let ids: Vec<usize> = line.split(' ').skip(1).map(|s| s.parse().unwrap()).collect();
            let p: Vec<[f64; 2]> = ids.iter().map(|&i| mesh.vertices[i]).collect();
            let area2: f64 = (0..4).map(|k| p[k][0] * p[(k + 1) % 4][1] - p[(k + 1) % 4][0] * p[k][1]).sum();
            assert!(area2 > 0.0);
        }
        assert!(!text.contains("POINT_DATA"));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mesh = Forest::new_brick(1, 1, Rect::unit(), 1).unwrap().extract_mesh(None).unwrap();
        let short = vec![0.0; 3];
        let fields = VtkFields { cell_scalars: vec![("eta_k", &short)], ..Default::default() };
        assert!(write_vtk(Vec::new(), "t", &mesh, &fields).is_err());
    }
}
