//! Exponentially fitted edge-averaged finite-volume discretization.
//!
//! Each leaf contributes a 4x4 matrix built from its four edges. An edge
//! `(i, j)` of length `l` in a cell of area `|K|` carries the coefficient
//! `c = eps_h |K| / (2 l^2)` with `eps_h` the harmonic mean of `eps` along the
//! edge, and couples the vertices through the Bernoulli function of the
//! potential difference:
//!
//! ```text
//! A_ii += c B(psi_i - psi_j)    A_ij -= c B(psi_j - psi_i)
//! ```
//!
//! The discrete flux is `eps (grad u - u grad psi)`, so `exp(psi)` lies in the
//! kernel of every edge stencil. Reaction and load are lumped to the vertices.

use crate::forest::{Cell, MeshView};
use crate::linalg::CsrMatrix;
use crate::space::{DirichletSpec, DofMap, NodalField};
use crate::{Error, Result, NONE};
use rayon::prelude::*;
use std::sync::Arc;

pub type ScalarField = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Relative pull of coefficient samples toward the cell centre.
///
/// Samples on a discontinuity then take the value of the cell being assembled.
const NUDGE: f64 = 1e-8;

/// Coefficients of `-div(eps grad u - eps u grad psi) + b u = f`.
#[derive(Clone)]
pub struct AdrCoefficients {
    pub epsilon: ScalarField,
    pub psi: ScalarField,
    pub b: ScalarField,
    pub f: ScalarField,
    pub dirichlet: DirichletSpec,
    /// Midpoint samples per edge for the harmonic mean.
    pub n_quad: usize,
    /// Use the plain average of `1/eps` instead of its reciprocal.
    pub harmonic_literal: bool,
}

impl std::fmt::Debug for AdrCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdrCoefficients")
            .field("n_quad", &self.n_quad)
            .field("harmonic_literal", &self.harmonic_literal)
            .finish_non_exhaustive()
    }
}

impl AdrCoefficients {
    pub fn new(
        epsilon: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        psi: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dirichlet: DirichletSpec,
    ) -> AdrCoefficients {
        AdrCoefficients {
            epsilon: Arc::new(epsilon),
            psi: Arc::new(psi),
            b: Arc::new(b),
            f: Arc::new(f),
            dirichlet,
            n_quad: 4,
            harmonic_literal: false,
        }
    }

    /// Constant diffusion, no advection.
    pub fn diffusion(eps: f64, b: f64, f: f64, dirichlet: DirichletSpec) -> AdrCoefficients {
        AdrCoefficients::new(move |_, _| eps, |_, _| 0.0, move |_, _| b, move |_, _| f, dirichlet)
    }
}

/// `B(x) = x / (e^x - 1)`, finite for every finite `x`.
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-10 {
        1.0 - 0.5 * x + x * x / 12.0
    } else {
        x / x.exp_m1()
    }
}

/// Harmonic mean of `eps` along the segment `a -> b` with an `n`-point midpoint rule.
///
/// `toward` is the point the samples are nudged to (the cell centre).
pub fn edge_harmonic_mean(
    eps: &(dyn Fn(f64, f64) -> f64 + Send + Sync),
    a: [f64; 2],
    b: [f64; 2],
    n: usize,
    toward: [f64; 2],
    literal: bool,
) -> Result<f64> {
    let n = n.max(1);
    let mut sum = 0.0;
    for k in 0..n {
        let t = (k as f64 + 0.5) / n as f64;
        let p = nudge([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], toward);
        let e = eps(p[0], p[1]);
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidCoefficient(format!("eps = {e} at ({}, {})", p[0], p[1])));
        }
        sum += 1.0 / e;
    }
    let mean_inv = sum / n as f64;
    Ok(if literal { mean_inv } else { 1.0 / mean_inv })
}

fn nudge(p: [f64; 2], toward: [f64; 2]) -> [f64; 2] {
    [p[0] + NUDGE * (toward[0] - p[0]), p[1] + NUDGE * (toward[1] - p[1])]
}

/// Local edges as vertex pairs: bottom, left, right, top.
pub const LOCAL_EDGES: [(usize, usize); 4] = [(0, 1), (2, 0), (1, 3), (3, 2)];

/// Local stiffness (with lumped reaction) and lumped load of one leaf.
pub fn local_fvsg_matrix(cell: &Cell, coeffs: &AdrCoefficients) -> Result<([[f64; 4]; 4], [f64; 4])> {
    let p = cell.corners();
    let centre = cell.center();
    let area = cell.area();
    let psi = p.map(|q| (coeffs.psi)(q[0], q[1]));
    let mut a = [[0.0; 4]; 4];
    for &(i, j) in &LOCAL_EDGES {
        let len = if p[i][1] == p[j][1] { cell.extent[0] } else { cell.extent[1] };
        let eps = edge_harmonic_mean(&*coeffs.epsilon, p[i], p[j], coeffs.n_quad, centre, coeffs.harmonic_literal)?;
        let c = eps * area / (2.0 * len * len);
        let bij = bernoulli(psi[i] - psi[j]);
        let bji = bernoulli(psi[j] - psi[i]);
        a[i][i] += c * bij;
        a[i][j] -= c * bji;
        a[j][j] += c * bji;
        a[j][i] -= c * bij;
    }
    let mut load = [0.0; 4];
    for k in 0..4 {
        let q = nudge(p[k], centre);
        let b = (coeffs.b)(q[0], q[1]);
        if !(b >= 0.0) {
            return Err(Error::InvalidCoefficient(format!("b = {b} at ({}, {})", q[0], q[1])));
        }
        a[k][k] += b * area / 4.0;
        load[k] = (coeffs.f)(q[0], q[1]) * area / 4.0;
    }
    Ok((a, load))
}

/// Condensed system over the free (non-Dirichlet) dofs.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Global dof of each reduced row.
    pub free_dofs: Vec<u32>,
    /// Reduced index per global dof, [`NONE`] for Dirichlet dofs.
    pub free_index: Vec<u32>,
}

impl SparseSystem {
    /// Insert a reduced solution into a full dof vector with Dirichlet values.
    pub fn expand_solution(&self, x: &[f64], dofmap: &DofMap) -> NodalField {
        let mut values = vec![0.0; dofmap.n_dofs];
        for &(d, g) in &dofmap.dirichlet {
            values[d as usize] = g;
        }
        for (k, &d) in self.free_dofs.iter().enumerate() {
            values[d as usize] = x[k];
        }
        NodalField { values }
    }

    /// Reduced restriction of a full dof vector.
    pub fn restrict(&self, u: &NodalField) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| u.values[d as usize]).collect()
    }
}

/// Global assembly with hanging-node condensation and Dirichlet elimination.
///
/// Each row gathers contributions in a fixed order (incident leaves, then
/// leaves around hanging vertices constrained to this dof), so the result is
/// bit-reproducible regardless of thread count.
pub fn assemble(mesh: &MeshView, dofmap: &DofMap, coeffs: &AdrCoefficients) -> Result<SparseSystem> {
    let locals: Vec<([[f64; 4]; 4], [f64; 4])> = mesh
        .leaves
        .par_iter()
        .map(|c| local_fvsg_matrix(c, coeffs))
        .collect::<Result<_>>()?;

    let dirichlet_value = {
        let mut g = vec![f64::NAN; dofmap.n_dofs];
        for &(d, v) in &dofmap.dirichlet {
            g[d as usize] = v;
        }
        g
    };
    let mut free_index = vec![NONE; dofmap.n_dofs];
    let mut free_dofs = Vec::with_capacity(dofmap.n_dofs - dofmap.dirichlet.len());
    for d in 0..dofmap.n_dofs {
        if dirichlet_value[d].is_nan() {
            free_index[d] = free_dofs.len() as u32;
            free_dofs.push(d as u32);
        }
    }
    if free_dofs.is_empty() {
        return Err(Error::InvalidProblem("no free degrees of freedom".into()));
    }

    // Hanging vertices grouped by parent dof.
    let mut child_offsets = vec![0u32; dofmap.n_dofs + 1];
    for c in &dofmap.constraints {
        for &p in &c.parents {
            child_offsets[p as usize + 1] += 1;
        }
    }
    for d in 0..dofmap.n_dofs {
        child_offsets[d + 1] += child_offsets[d];
    }
    let mut fill = child_offsets.clone();
    let mut children = vec![(0u32, 0.0f64); child_offsets[dofmap.n_dofs] as usize];
    for c in &dofmap.constraints {
        for (&p, &w) in c.parents.iter().zip(&c.weights) {
            children[fill[p as usize] as usize] = (c.vertex, w);
            fill[p as usize] += 1;
        }
    }

    let rows: Vec<(Vec<(u32, f64)>, f64)> = free_dofs
        .par_iter()
        .map(|&d| {
            let mut entries: Vec<(u32, f64)> = Vec::with_capacity(16);
            let mut rhs = 0.0;
            let mut gather = |vertex: u32, weight: f64, entries: &mut Vec<(u32, f64)>| {
                for &leaf in mesh.vertex_leaves(vertex) {
                    let cv = mesh.cell_to_vertex[leaf as usize];
                    let a = cv.iter().position(|&v| v == vertex).unwrap();
                    let (m, f) = &locals[leaf as usize];
                    rhs += weight * f[a];
                    for b in 0..4 {
                        let val = weight * m[a][b];
                        let w = cv[b];
                        let wd = dofmap.vertex_to_dof[w as usize];
                        if wd != NONE {
                            entries.push((wd, val));
                        } else {
                            let c = &dofmap.constraints[mesh.hanging_of[w as usize] as usize];
                            entries.push((c.parents[0], c.weights[0] * val));
                            entries.push((c.parents[1], c.weights[1] * val));
                        }
                    }
                }
            };
            gather(dofmap.dof_to_vertex[d as usize], 1.0, &mut entries);
            let (a, b) = (child_offsets[d as usize] as usize, child_offsets[d as usize + 1] as usize);
            for &(h, w) in &children[a..b] {
                gather(h, w, &mut entries);
            }
            entries.sort_by_key(|e| e.0);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(9);
            for (col, val) in entries {
                let g = dirichlet_value[col as usize];
                if !g.is_nan() {
                    rhs -= val * g;
                    continue;
                }
                let c = free_index[col as usize];
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += val,
                    _ => merged.push((c, val)),
                }
            }
            (merged, rhs)
        })
        .collect();

    let n = free_dofs.len();
    let mut row_offsets = Vec::with_capacity(n + 1);
    row_offsets.push(0usize);
    let nnz: usize = rows.iter().map(|r| r.0.len()).sum();
    let mut cols = Vec::with_capacity(nnz);
    let mut vals = Vec::with_capacity(nnz);
    let mut rhs = Vec::with_capacity(n);
    for (entries, r) in rows {
        for (c, v) in entries {
            cols.push(c);
            vals.push(v);
        }
        row_offsets.push(cols.len());
        rhs.push(r);
    }
    Ok(SparseSystem { matrix: CsrMatrix::from_parts(n, row_offsets, cols, vals), rhs, free_dofs, free_index })
}
