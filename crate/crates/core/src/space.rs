//! Constrained piecewise-bilinear space on a non-conforming mesh.
//!
//! Hanging vertices are not degrees of freedom; their value is the mean of
//! the two endpoints of the coarse face they sit on.

use crate::forest::MeshView;
use crate::{Error, Result, NONE};
use rayon::prelude::*;
use std::path::Path;
use std::sync::Arc;

pub type PointFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type PointPredicate = Arc<dyn Fn(f64, f64) -> bool + Send + Sync>;

/// Dirichlet portion of the boundary and its data.
#[derive(Clone)]
pub struct DirichletSpec {
    pub on_boundary: PointPredicate,
    pub g: PointFn,
}

impl std::fmt::Debug for DirichletSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("DirichletSpec { .. }")
    }
}

impl DirichletSpec {
    pub fn new(
        on_boundary: impl Fn(f64, f64) -> bool + Send + Sync + 'static,
        g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> DirichletSpec {
        DirichletSpec { on_boundary: Arc::new(on_boundary), g: Arc::new(g) }
    }

    /// Pure natural boundary.
    pub fn none() -> DirichletSpec {
        DirichletSpec::new(|_, _| false, |_, _| 0.0)
    }

    /// Dirichlet data on the whole boundary.
    pub fn everywhere(g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> DirichletSpec {
        DirichletSpec::new(|_, _| true, g)
    }
}

/// Hanging vertex tied to two parent dofs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constraint {
    pub vertex: u32,
    pub parents: [u32; 2],
    pub weights: [f64; 2],
}

/// Dof numbering over the non-hanging vertices.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub n_dofs: usize,
    /// Dof per vertex, [`NONE`] for hanging vertices.
    pub vertex_to_dof: Vec<u32>,
    pub dof_to_vertex: Vec<u32>,
    /// One entry per hanging vertex, in the order of `MeshView::hanging`.
    pub constraints: Vec<Constraint>,
    /// Dirichlet dofs with their boundary value, ascending by dof.
    pub dirichlet: Vec<(u32, f64)>,
}

impl DofMap {
    pub fn build(mesh: &MeshView, spec: &DirichletSpec) -> Result<DofMap> {
        let nv = mesh.n_vertices();
        let mut vertex_to_dof = vec![NONE; nv];
        let mut dof_to_vertex = Vec::with_capacity(nv - mesh.hanging.len());
        for v in 0..nv {
            if !mesh.is_hanging(v as u32) {
                vertex_to_dof[v] = dof_to_vertex.len() as u32;
                dof_to_vertex.push(v as u32);
            } else if mesh.on_boundary[v] {
                return Err(Error::Precondition(format!("hanging vertex {v} lies on the boundary")));
            }
        }
        let constraints = mesh
            .hanging
            .iter()
            .map(|h| Constraint {
                vertex: h.vertex,
                parents: [vertex_to_dof[h.parents[0] as usize], vertex_to_dof[h.parents[1] as usize]],
                weights: [0.5, 0.5],
            })
            .collect();
        let dirichlet = dof_to_vertex
            .iter()
            .enumerate()
            .filter_map(|(d, &v)| {
                let [x, y] = mesh.vertices[v as usize];
                (mesh.on_boundary[v as usize] && (spec.on_boundary)(x, y))
                    .then(|| (d as u32, (spec.g)(x, y)))
            })
            .collect();
        Ok(DofMap { n_dofs: dof_to_vertex.len(), vertex_to_dof, dof_to_vertex, constraints, dirichlet })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_to_dof.len()
    }

    pub fn is_dirichlet_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n_dofs];
        for &(d, _) in &self.dirichlet {
            m[d as usize] = true;
        }
        m
    }
}

/// Values of a constrained bilinear field, one per dof.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalField {
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn new(values: Vec<f64>) -> NodalField {
        NodalField { values }
    }

    pub fn zeros(dofmap: &DofMap) -> NodalField {
        NodalField { values: vec![0.0; dofmap.n_dofs] }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(f: impl Fn(f64, f64) -> f64 + Sync, mesh: &MeshView, dofmap: &DofMap) -> NodalField {
        let values = dofmap
            .dof_to_vertex
            .par_iter()
            .map(|&v| {
                let [x, y] = mesh.vertices[v as usize];
                f(x, y)
            })
            .collect();
        NodalField { values }
    }

    /// Values at every mesh vertex, hanging vertices filled from their constraint.
    pub fn expand(&self, dofmap: &DofMap) -> Vec<f64> {
        let mut out: Vec<f64> = dofmap
            .vertex_to_dof
            .iter()
            .map(|&d| if d == NONE { 0.0 } else { self.values[d as usize] })
            .collect();
        for c in &dofmap.constraints {
            out[c.vertex as usize] = c.weights[0] * self.values[c.parents[0] as usize]
                + c.weights[1] * self.values[c.parents[1] as usize];
        }
        out
    }

    /// Keep the dof entries of a full vertex vector.
    pub fn restrict(vertex_values: &[f64], dofmap: &DofMap) -> NodalField {
        NodalField { values: dofmap.dof_to_vertex.iter().map(|&v| vertex_values[v as usize]).collect() }
    }

    /// Bilinear value in leaf `leaf` at `(x, y)`.
    pub fn evaluate(&self, mesh: &MeshView, dofmap: &DofMap, leaf: u32, x: f64, y: f64) -> Result<f64> {
        let corners = corner_values(&self.values, mesh, dofmap, leaf);
        eval_bilinear(mesh, leaf, corners, x, y)
    }

    /// Move a field onto another mesh of the same brick by pointwise evaluation.
    pub fn transfer(
        &self,
        old_mesh: &MeshView,
        old_dofmap: &DofMap,
        new_mesh: &MeshView,
        new_dofmap: &DofMap,
    ) -> Result<NodalField> {
        if !old_mesh.compatible(new_mesh) {
            return Err(Error::InvalidArgument("meshes come from different domains".into()));
        }
        let full = self.expand(old_dofmap);
        let values = new_dofmap
            .dof_to_vertex
            .par_iter()
            .map(|&v| {
                let [x, y] = new_mesh.vertices[v as usize];
                let leaf = old_mesh
                    .locate(x, y)
                    .ok_or_else(|| Error::InvalidArgument(format!("({x}, {y}) outside old mesh")))?;
                let cv = old_mesh.cell_to_vertex[leaf as usize];
                let corners = cv.map(|c| full[c as usize]);
                eval_bilinear(old_mesh, leaf, corners, x, y)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(NodalField { values })
    }

    /// CSV with columns `dof,x,y,value`.
    pub fn write_csv(&self, path: impl AsRef<Path>, mesh: &MeshView, dofmap: &DofMap) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dof", "x", "y", "value"])?;
        for (d, &v) in dofmap.dof_to_vertex.iter().enumerate() {
            let [x, y] = mesh.vertices[v as usize];
            w.write_record(&[d.to_string(), x.to_string(), y.to_string(), self.values[d].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Corner values of a leaf with hanging corners resolved.
pub fn corner_values(values: &[f64], mesh: &MeshView, dofmap: &DofMap, leaf: u32) -> [f64; 4] {
    mesh.cell_to_vertex[leaf as usize].map(|v| {
        let d = dofmap.vertex_to_dof[v as usize];
        if d != NONE {
            values[d as usize]
        } else {
            let c = &dofmap.constraints[mesh.hanging_of[v as usize] as usize];
            c.weights[0] * values[c.parents[0] as usize] + c.weights[1] * values[c.parents[1] as usize]
        }
    })
}

/// Bilinear shape functions at local coordinates `(s, t)` in `[0, 1]^2`.
pub fn bilinear_shape(s: f64, t: f64) -> [f64; 4] {
    [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t]
}

fn eval_bilinear(mesh: &MeshView, leaf: u32, c: [f64; 4], x: f64, y: f64) -> Result<f64> {
    let cell = &mesh.leaves[leaf as usize];
    if !cell.contains(x, y, 1e-12) {
        return Err(Error::InvalidArgument(format!("({x}, {y}) is outside leaf {leaf}")));
    }
    let s = ((x - cell.anchor[0]) / cell.extent[0]).clamp(0.0, 1.0);
    let t = ((y - cell.anchor[1]) / cell.extent[1]).clamp(0.0, 1.0);
    let n = bilinear_shape(s, t);
    Ok(n[0] * c[0] + n[1] * c[1] + n[2] * c[2] + n[3] * c[3])
}
