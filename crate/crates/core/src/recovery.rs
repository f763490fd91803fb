//! Gradient and solution recovery.
//!
//! Gradients are recovered at vertices from the tangential divided
//! differences on the mesh edges: a reciprocal-length weighted average of the
//! two incident edges per axis, or a one-sided three-point formula where one
//! side is missing (domain boundary) or not owned by the vertex's partition.
//!
//! Near hanging nodes the stencils follow the quadratic the recovered
//! solution takes on the coarse face: a step along a split face is merged
//! into the full face, and a step that ends on a hanging node uses the
//! recovered value there instead of the constrained mean. The recovered
//! value depends on the gradient at the face endpoints, so the recovery is
//! repeated until the gradient no longer changes.
//!
//! The solution is recovered per leaf on the nine tensor Q2 nodes by path
//! integrals of the recovered gradient starting from the vertices.

use crate::forest::{Axis, Face, MeshView, DOWN, LEFT, RIGHT, UP};
use crate::space::{DofMap, NodalField};
use crate::{Error, Result, NONE};
use rayon::prelude::*;
use std::path::Path;

const MAX_PASSES: usize = 32;

/// Tangential divided difference per mesh edge, oriented along +axis.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeGradients {
    pub values: Vec<f64>,
    /// Field values at every mesh vertex (hanging vertices constrained).
    pub vertex_values: Vec<f64>,
}

pub fn edge_gradients(u: &NodalField, mesh: &MeshView, dofmap: &DofMap) -> EdgeGradients {
    let full = u.expand(dofmap);
    let values = mesh
        .edges
        .par_iter()
        .map(|e| (full[e.v[1] as usize] - full[e.v[0] as usize]) / e.len)
        .collect();
    EdgeGradients { values, vertex_values: full }
}

/// Diagnostics of one gradient recovery.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RecoveryReport {
    /// Vertex-axis pairs that fell back to a single edge value.
    pub fallbacks: usize,
    /// Recovery passes until the gradient was stationary.
    pub passes: usize,
    pub stationary: bool,
}

/// Piecewise bilinear recovered gradient, one vector per mesh vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredGradient {
    pub values: Vec<[f64; 2]>,
    /// Recovered minus constrained value at each hanging node (order of `MeshView::hanging`).
    pub hanging_delta: Vec<f64>,
    pub report: RecoveryReport,
}

impl RecoveredGradient {
    /// Bilinear value in `leaf` at local coordinates `(s, t)`.
    pub fn at_local(&self, mesh: &MeshView, leaf: u32, s: f64, t: f64) -> [f64; 2] {
        let cv = mesh.cell_to_vertex[leaf as usize];
        let w = crate::space::bilinear_shape(s, t);
        let mut g = [0.0; 2];
        for k in 0..4 {
            let v = self.values[cv[k] as usize];
            g[0] += w[k] * v[0];
            g[1] += w[k] * v[1];
        }
        g
    }
}

#[derive(Clone, Copy)]
enum End {
    Vertex(u32),
    Hanging(u32),
    Stop,
}

#[derive(Clone, Copy)]
struct Step {
    value: f64,
    len: f64,
    end: End,
}

struct Pass<'a> {
    mesh: &'a MeshView,
    edge: &'a [f64],
    u: &'a [f64],
    sigma: &'a [[f64; 2]],
    delta: &'a [f64],
}

impl Pass<'_> {
    fn available(&self, e: u32, p: u32) -> bool {
        self.mesh.edges[e as usize].cells.iter().any(|&c| c != NONE && self.mesh.owner[c as usize] == p)
    }

    fn ustar(&self, v: u32) -> f64 {
        let h = self.mesh.hanging_of[v as usize];
        self.u[v as usize] + if h == NONE { 0.0 } else { self.delta[h as usize] }
    }

    fn step(&self, v: u32, slot: usize, p: u32) -> Option<Step> {
        let m = self.mesh;
        let e = m.vertex_edges[v as usize][slot];
        if e == NONE || !self.available(e, p) {
            return None;
        }
        let edge = &m.edges[e as usize];
        let forward = slot == RIGHT || slot == UP;
        let far = if forward { edge.v[1] } else { edge.v[0] };
        let val = self.edge[e as usize];
        let hk = m.hanging_of[far as usize];
        if hk == NONE {
            return Some(Step { value: val, len: edge.len, end: End::Vertex(far) });
        }
        let h = &m.hanging[hk as usize];
        if h.axis == edge.axis {
            let e2 = m.vertex_edges[far as usize][slot];
            if e2 != NONE && self.available(e2, p) {
                let next = &m.edges[e2 as usize];
                let far2 = if forward { next.v[1] } else { next.v[0] };
                let len = edge.len + next.len;
                let value = (val * edge.len + self.edge[e2 as usize] * next.len) / len;
                return Some(Step { value, len, end: End::Vertex(far2) });
            }
            return Some(Step { value: val, len: edge.len, end: End::Stop });
        }
        let d = self.delta[hk as usize];
        let corr = if forward { d } else { -d } / edge.len;
        Some(Step { value: val + corr, len: edge.len, end: End::Hanging(hk) })
    }

    /// Continue through the coarse leaf behind a hanging node to its opposite face midpoint.
    fn through_coarse(&self, hk: u32, slot: usize, p: u32) -> Option<Step> {
        let m = self.mesh;
        let h = &m.hanging[hk as usize];
        if m.owner[h.leaf as usize] != p {
            return None;
        }
        let cv = m.cell_to_vertex[h.leaf as usize];
        let (a, b) = match h.face {
            Face::Left => (cv[1], cv[3]),
            Face::Right => (cv[0], cv[2]),
            Face::Bottom => (cv[2], cv[3]),
            Face::Top => (cv[0], cv[1]),
        };
        let t = h.axis.index();
        let n = h.axis.other().index();
        let cell = &m.leaves[h.leaf as usize];
        let big = cell.extent[t];
        let um = 0.5 * (self.ustar(a) + self.ustar(b))
            + big * (self.sigma[a as usize][t] - self.sigma[b as usize][t]) / 8.0;
        let uw = self.ustar(h.vertex);
        let len = cell.extent[n];
        let forward = slot == RIGHT || slot == UP;
        let value = if forward { (um - uw) / len } else { (uw - um) / len };
        Some(Step { value, len, end: End::Stop })
    }

    fn next(&self, s: &Step, slot: usize, p: u32) -> Option<Step> {
        match s.end {
            End::Vertex(w) => self.step(w, slot, p),
            End::Hanging(hk) => self.through_coarse(hk, slot, p),
            End::Stop => None,
        }
    }

    /// Recovered derivative along `axis` at `v`, plus a fallback flag.
    fn axis_value(&self, v: u32, axis: Axis, p: u32) -> (f64, bool) {
        let (lo, hi) = match axis {
            Axis::X => (LEFT, RIGHT),
            Axis::Y => (DOWN, UP),
        };
        match (self.step(v, lo, p), self.step(v, hi, p)) {
            (Some(l), Some(r)) => {
                let (wl, wr) = (1.0 / l.len, 1.0 / r.len);
                ((l.value * wl + r.value * wr) / (wl + wr), false)
            }
            (Some(s1), None) => self.one_sided(&s1, lo, p),
            (None, Some(s1)) => self.one_sided(&s1, hi, p),
            (None, None) => (0.0, true),
        }
    }

    fn one_sided(&self, s1: &Step, slot: usize, p: u32) -> (f64, bool) {
        match self.next(s1, slot, p) {
            Some(s2) => {
                let (w1, w2) = (1.0 / s1.len, 1.0 / s2.len);
                ((s1.value * (w1 + 2.0 * w2) - s2.value * w2) / (w1 + w2), false)
            }
            None => (s1.value, true),
        }
    }
}

fn hanging_deltas(mesh: &MeshView, sigma: &[[f64; 2]]) -> Vec<f64> {
    mesh.hanging
        .iter()
        .map(|h| {
            let t = h.axis.index();
            let [a, b] = h.parents;
            let big = mesh.vertices[b as usize][t] - mesh.vertices[a as usize][t];
            big * (sigma[a as usize][t] - sigma[b as usize][t]) / 8.0
        })
        .collect()
}

/// Recover the nodal gradient using the partition stored in `mesh.owner`.
pub fn recover_gradient(edges: &EdgeGradients, mesh: &MeshView) -> RecoveredGradient {
    let nv = mesh.n_vertices();
    let owners: Vec<u32> = (0..nv as u32)
        .into_par_iter()
        .map(|v| if mesh.is_hanging(v) { NONE } else { mesh.vertex_owner(v) })
        .collect();
    let mut sigma = vec![[0.0; 2]; nv];
    let mut delta = vec![0.0; mesh.hanging.len()];
    let mut report = RecoveryReport::default();
    let max_passes = if mesh.hanging.is_empty() { 1 } else { MAX_PASSES };
    for pass in 0..max_passes {
        let ctx = Pass { mesh, edge: &edges.values, u: &edges.vertex_values, sigma: &sigma, delta: &delta };
        let computed: Vec<([f64; 2], usize)> = (0..nv as u32)
            .into_par_iter()
            .map(|v| {
                let p = owners[v as usize];
                if p == NONE {
                    return ([0.0; 2], 0);
                }
                let (gx, fx) = ctx.axis_value(v, Axis::X, p);
                let (gy, fy) = ctx.axis_value(v, Axis::Y, p);
                ([gx, gy], fx as usize + fy as usize)
            })
            .collect();
        let mut next: Vec<[f64; 2]> = computed.iter().map(|c| c.0).collect();
        for h in &mesh.hanging {
            let [a, b] = h.parents.map(|q| next[q as usize]);
            next[h.vertex as usize] = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        }
        report.fallbacks = computed.iter().map(|c| c.1).sum();
        report.passes = pass + 1;
        let same = pass > 0
            && next.iter().zip(&sigma).all(|(a, b)| a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits());
        sigma = next;
        delta = hanging_deltas(mesh, &sigma);
        if same || mesh.hanging.is_empty() {
            report.stationary = true;
            break;
        }
    }
    RecoveredGradient { values: sigma, hanging_delta: delta, report }
}

/// Biquadratic recovered solution: nine values per leaf.
///
/// Node order: the four vertices (lexicographic), the midpoints of the left,
/// right, bottom and top faces, then the centroid.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredSolution {
    pub values: Vec<[f64; 9]>,
}

/// Local coordinates of the nine nodes.
pub const Q2_NODES: [[f64; 2]; 9] = [
    [0.0, 0.0],
    [1.0, 0.0],
    [0.0, 1.0],
    [1.0, 1.0],
    [0.0, 0.5],
    [1.0, 0.5],
    [0.5, 0.0],
    [0.5, 1.0],
    [0.5, 0.5],
];

/// Tensor Q2 shape functions in the node order of [`RecoveredSolution`].
pub fn q2_shape(s: f64, t: f64) -> [f64; 9] {
    let l = |x: f64| [2.0 * (x - 0.5) * (x - 1.0), -4.0 * x * (x - 1.0), 2.0 * x * (x - 0.5)];
    let (a, b) = (l(s), l(t));
    [
        a[0] * b[0],
        a[2] * b[0],
        a[0] * b[2],
        a[2] * b[2],
        a[0] * b[1],
        a[2] * b[1],
        a[1] * b[0],
        a[1] * b[2],
        a[1] * b[1],
    ]
}

impl RecoveredSolution {
    pub fn eval_local(&self, leaf: u32, s: f64, t: f64) -> f64 {
        let n = q2_shape(s, t);
        self.values[leaf as usize].iter().zip(&n).map(|(v, w)| v * w).sum()
    }

    pub fn evaluate(&self, mesh: &MeshView, leaf: u32, x: f64, y: f64) -> Result<f64> {
        let c = &mesh.leaves[leaf as usize];
        if !c.contains(x, y, 1e-12) {
            return Err(Error::InvalidArgument(format!("({x}, {y}) is outside leaf {leaf}")));
        }
        let s = ((x - c.anchor[0]) / c.extent[0]).clamp(0.0, 1.0);
        let t = ((y - c.anchor[1]) / c.extent[1]).clamp(0.0, 1.0);
        Ok(self.eval_local(leaf, s, t))
    }

    /// Point cloud CSV (`leaf,x,y,value`) on an `n x n` grid per leaf.
    pub fn write_csv(&self, path: impl AsRef<Path>, mesh: &MeshView, n: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["leaf", "x", "y", "value"])?;
        let n = n.max(2);
        for (k, c) in mesh.leaves.iter().enumerate() {
            for j in 0..n {
                for i in 0..n {
                    let s = i as f64 / (n - 1) as f64;
                    let t = j as f64 / (n - 1) as f64;
                    let x = c.anchor[0] + s * c.extent[0];
                    let y = c.anchor[1] + t * c.extent[1];
                    let v = self.eval_local(k as u32, s, t);
                    w.write_record(&[k.to_string(), x.to_string(), y.to_string(), v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Recover the per-leaf Q2 field from `u_h` and the recovered gradient.
pub fn recover_solution(edges: &EdgeGradients, sigma: &RecoveredGradient, mesh: &MeshView) -> RecoveredSolution {
    let u = &edges.vertex_values;
    let ustar: Vec<f64> = (0..mesh.n_vertices())
        .map(|v| {
            let h = mesh.hanging_of[v];
            u[v] + if h == NONE { 0.0 } else { sigma.hanging_delta[h as usize] }
        })
        .collect();
    let s = &sigma.values;
    let mid: Vec<f64> = mesh
        .edges
        .par_iter()
        .map(|e| {
            let [a, b] = e.v;
            let t = e.axis.index();
            let split = [(a, 0usize), (b, 1usize)]
                .into_iter()
                .find_map(|(v, end)| mesh.hanging_node(v).filter(|h| h.axis == e.axis).map(|h| (h, end)));
            if let Some((h, end)) = split {
                let [p1, p2] = h.parents;
                let (u1, um, u2) = (ustar[p1 as usize], ustar[h.vertex as usize], ustar[p2 as usize]);
                // Hanging node at the high end: lower half of the coarse face.
                return if end == 1 {
                    0.375 * u1 + 0.75 * um - 0.125 * u2
                } else {
                    -0.125 * u1 + 0.75 * um + 0.375 * u2
                };
            }
            let (sa, sb) = (s[a as usize][t], s[b as usize][t]);
            let half = 0.5 * e.len;
            let from_a = ustar[a as usize] + half * (0.75 * sa + 0.25 * sb);
            let from_b = ustar[b as usize] - half * (0.25 * sa + 0.75 * sb);
            0.5 * (from_a + from_b)
        })
        .collect();
    let values = (0..mesh.n_leaves())
        .into_par_iter()
        .map(|k| {
            let cv = mesh.cell_to_vertex[k];
            let c = &mesh.leaves[k];
            let mut w = [0.0; 9];
            for i in 0..4 {
                w[i] = ustar[cv[i] as usize];
            }
            for f in 0..4 {
                let m = mesh.face_mid[k][f];
                w[4 + f] = if m != NONE { ustar[m as usize] } else { mid[mesh.face_edges[k][f][0] as usize] };
            }
            let sc = cv.map(|v| s[v as usize]);
            let comb = |wts: [f64; 4], t: usize| (0..4).map(|i| wts[i] * sc[i][t]).sum::<f64>();
            let (hx, hy) = (0.5 * c.extent[0], 0.5 * c.extent[1]);
            let p5 = w[4] + hx * comb([0.375, 0.125, 0.375, 0.125], 0);
            let p6 = w[5] - hx * comb([0.125, 0.375, 0.125, 0.375], 0);
            let p7 = w[6] + hy * comb([0.375, 0.375, 0.125, 0.125], 1);
            let p8 = w[7] - hy * comb([0.125, 0.125, 0.375, 0.375], 1);
            w[8] = 0.25 * (p5 + p6 + p7 + p8);
            w
        })
        .collect();
    RecoveredSolution { values }
}

/// Full pipeline from a nodal field: edge differences, gradient, solution.
pub fn recover(u: &NodalField, mesh: &MeshView, dofmap: &DofMap) -> (RecoveredGradient, RecoveredSolution) {
    let edges = edge_gradients(u, mesh, dofmap);
    let g = recover_gradient(&edges, mesh);
    let w = recover_solution(&edges, &g, mesh);
    (g, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{CellKey, Forest, Rect};
    use crate::space::DirichletSpec;
    use proptest::prelude::*;

    fn setup(f: &Forest) -> (MeshView, DofMap) {
        let m = f.extract_mesh(None).unwrap();
        let d = DofMap::build(&m, &DirichletSpec::none()).unwrap();
        (m, d)
    }

    fn uniform(level: u8) -> (MeshView, DofMap) {
        setup(&Forest::new_brick(1, 1, Rect::unit(), level).unwrap())
    }

    /// Three-level balanced mesh with hanging nodes in the interior and at the boundary.
    fn graded() -> Forest {
        let mut f = Forest::new_brick(2, 1, Rect::new(0.0, 0.0, 2.0, 1.0).unwrap(), 1).unwrap();
        f.refine(&[CellKey::new(1, 1, 1)]).unwrap();
        f.refine(&[CellKey::new(2, 3, 2)]).unwrap();
        f.refine(&[CellKey::new(1, 3, 0)]).unwrap();
        f.balance_2to1();
        f
    }

    fn poly(c: [f64; 9]) -> impl Fn(f64, f64) -> f64 + Sync {
        move |x, y| {
            let px = [1.0, x, x * x];
            let py = [1.0, y, y * y];
            (0..9).map(|k| c[k] * px[k % 3] * py[k / 3]).sum()
        }
    }

    fn poly_grad(c: [f64; 9], x: f64, y: f64) -> [f64; 2] {
        let px = [1.0, x, x * x];
        let py = [1.0, y, y * y];
        let dx = [0.0, 1.0, 2.0 * x];
        let dy = [0.0, 1.0, 2.0 * y];
        let mut g = [0.0; 2];
        for k in 0..9 {
            g[0] += c[k] * dx[k % 3] * py[k / 3];
            g[1] += c[k] * px[k % 3] * dy[k / 3];
        }
        g
    }

    #[test]
    fn edge_gradient_examples() {
        let (m, d) = uniform(2);
        let e = edge_gradients(&NodalField::interpolate(|x, _| x, &m, &d), &m, &d);
        for (k, edge) in m.edges.iter().enumerate() {
            let want = if edge.axis == Axis::X { 1.0 } else { 0.0 };
            assert!((e.values[k] - want).abs() < 1e-14);
        }
        let e = edge_gradients(&NodalField::interpolate(|x, _| x * x, &m, &d), &m, &d);
        let k = m
            .edges
            .iter()
            .position(|ed| ed.axis == Axis::X && m.vertices[ed.v[0] as usize][0] == 0.25)
            .unwrap();
        assert_eq!(e.values[k], 0.75);
        let e = edge_gradients(&NodalField::interpolate(|_, _| 2.0, &m, &d), &m, &d);
        assert!(e.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_examples_on_quarter_grid() {
        let (m, d) = uniform(2);
        let (g, _) = recover(&NodalField::interpolate(|x, _| x * x, &m, &d), &m, &d);
        for (v, p) in m.vertices.iter().enumerate() {
            assert!((g.values[v][0] - 2.0 * p[0]).abs() < 1e-13, "{p:?}");
        }
        assert_eq!(g.report.fallbacks, 0);
    }

    #[test]
    fn solution_example_half_cells() {
        let (m, d) = uniform(1);
        let (_, w) = recover(&NodalField::interpolate(|x, _| x * x, &m, &d), &m, &d);
        let k = m.locate(0.2, 0.2).unwrap() as usize;
        assert!((w.values[k][6] - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn constants_and_bilinears_reproduced() {
        let f = graded();
        let (m, d) = setup(&f);
        for u in [poly([3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), poly([0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0])] {
            let (_, w) = recover(&NodalField::interpolate(&u, &m, &d), &m, &d);
            for (k, c) in m.leaves.iter().enumerate() {
                for (n, q) in Q2_NODES.iter().enumerate() {
                    let x = c.anchor[0] + q[0] * c.extent[0];
                    let y = c.anchor[1] + q[1] * c.extent[1];
                    assert!((w.values[k][n] - u(x, y)).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn q2_shape_is_lagrangian() {
        for (n, q) in Q2_NODES.iter().enumerate() {
            let s = q2_shape(q[0], q[1]);
            for (k, v) in s.iter().enumerate() {
                assert_eq!(*v, if k == n { 1.0 } else { 0.0 });
            }
        }
        let w = RecoveredSolution { values: vec![Q2_NODES.map(|q| q[0] * q[0])] };
        let (m, _) = uniform(0);
        for (x, y) in [(0.3, 0.7), (0.91, 0.05), (0.5, 0.5)] {
            assert!((w.evaluate(&m, 0, x, y).unwrap() - x * x).abs() < 1e-13);
        }
        assert!(w.evaluate(&m, 0, 1.2, 0.5).is_err());
    }

    #[test]
    fn graded_mesh_has_hanging_nodes() {
        let f = graded();
        assert!(f.finest_level() >= 3);
        let (m, _) = setup(&f);
        assert!(m.hanging.len() >= 4);
    }

    fn check_exactness(f: &Forest, c: [f64; 9], total_degree: bool) {
        let (m, d) = setup(f);
        let u = poly(c);
        let (g, w) = recover(&NodalField::interpolate(&u, &m, &d), &m, &d);
        let scale = c.iter().fold(0.0f64, |a, b| a.max(b.abs())) * 6.0;
        assert_eq!(g.report.fallbacks, 0);
        for (v, p) in m.vertices.iter().enumerate() {
            if m.is_hanging(v as u32) {
                continue;
            }
            let ex = poly_grad(c, p[0], p[1]);
            assert!((g.values[v][0] - ex[0]).abs() <= 1e-11 * scale, "vertex {v} {p:?}");
            assert!((g.values[v][1] - ex[1]).abs() <= 1e-11 * scale, "vertex {v} {p:?}");
        }
        if total_degree {
            for (k, cell) in m.leaves.iter().enumerate() {
                for (n, q) in Q2_NODES.iter().enumerate() {
                    let x = cell.anchor[0] + q[0] * cell.extent[0];
                    let y = cell.anchor[1] + q[1] * cell.extent[1];
                    assert!((w.values[k][n] - u(x, y)).abs() <= 1e-11 * scale, "leaf {k} node {n}");
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(25))]
        #[test]
        fn gradient_exact_for_biquadratics(c in proptest::array::uniform9(-1.0f64..1.0)) {
            check_exactness(&graded(), c, false);
            let mut f = Forest::new_brick(1, 1, Rect::unit(), 2).unwrap();
            f.refine(&[CellKey::new(2, 0, 0), CellKey::new(2, 1, 0)]).unwrap();
            f.balance_2to1();
            check_exactness(&f, c, false);
        }

        #[test]
        fn solution_exact_for_quadratics(a in proptest::array::uniform6(-1.0f64..1.0)) {
            let c = [a[0], a[1], a[2], a[3], a[4], 0.0, a[5], 0.0, 0.0];
            check_exactness(&graded(), c, true);
            check_exactness(&Forest::new_brick(1, 1, Rect::unit(), 3).unwrap(), c, true);
        }

        #[test]
        fn recovered_solution_is_continuous(seed in 0u64..500) {
            let f = graded();
            let (m, d) = setup(&f);
            let u = NodalField::interpolate(|x, y| ((seed as f64 + 1.0) * x).sin() * (2.0 * y).cos() + x * y, &m, &d);
            let (_, w) = recover(&u, &m, &d);
            for e in &m.edges {
                let [c0, c1] = e.cells;
                if c0 == NONE || c1 == NONE { continue; }
                let a = m.vertices[e.v[0] as usize];
                let b = m.vertices[e.v[1] as usize];
                for k in 0..10 {
                    let t = (k as f64 + 0.5) / 10.0;
                    let (x, y) = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]));
                    let p = w.evaluate(&m, c0, x, y).unwrap();
                    let q = w.evaluate(&m, c1, x, y).unwrap();
                    prop_assert!((p - q).abs() < 1e-12, "{p} vs {q} at ({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn single_owner_matches_serial() {
        let f = graded();
        let (m, d) = setup(&f);
        let u = NodalField::interpolate(|x, y| (3.0 * x).exp() * y.sin(), &m, &d);
        let e = edge_gradients(&u, &m, &d);
        let serial = recover_gradient(&e, &m);
        let m1 = f.extract_mesh(Some(&f.partition_morton(1).unwrap())).unwrap();
        assert_eq!(recover_gradient(&e, &m1), serial);
        let m4 = f.extract_mesh(Some(&f.partition_morton(4).unwrap())).unwrap();
        let parted = recover_gradient(&e, &m4);
        assert_ne!(parted.values, serial.values);
    }
}
