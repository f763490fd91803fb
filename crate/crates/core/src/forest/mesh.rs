//! Flat mesh view of a balanced forest.

use super::{Cell, CellKey, Face, Forest, Rect};
use crate::{Error, Result, NONE};
use rustc_hash::FxHashMap;

/// Direction of a mesh edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    /// Horizontal edge; carries the x-derivative.
    X,
    /// Vertical edge; carries the y-derivative.
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }

    pub fn other(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        }
    }
}

/// Elementary mesh edge between two consecutive vertices on a grid line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    /// Endpoints ordered by increasing coordinate along `axis`.
    pub v: [u32; 2],
    pub axis: Axis,
    pub len: f64,
    /// Adjacent leaves: (below, above) for x-edges, (left, right) for y-edges.
    /// Missing sides hold [`NONE`].
    pub cells: [u32; 2],
}

/// A vertex in the interior of a coarser leaf's face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HangingNode {
    pub vertex: u32,
    /// Face endpoints ordered by increasing coordinate along `axis`.
    pub parents: [u32; 2],
    /// Direction of the coarse face.
    pub axis: Axis,
    /// The coarse leaf owning the face.
    pub leaf: u32,
    pub face: Face,
}

/// Per-vertex incident edge slots.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const UP: usize = 3;

/// Leaves, vertices, edges and hanging-node registry of a balanced forest.
#[derive(Clone, Debug)]
pub struct MeshView {
    pub leaves: Vec<Cell>,
    pub vertices: Vec<[f64; 2]>,
    pub on_boundary: Vec<bool>,
    /// Corners per leaf in lexicographic order: (x0,y0), (x1,y0), (x0,y1), (x1,y1).
    pub cell_to_vertex: Vec<[u32; 4]>,
    pub edges: Vec<Edge>,
    pub hanging: Vec<HangingNode>,
    /// Index into `hanging` per vertex, or [`NONE`].
    pub hanging_of: Vec<u32>,
    /// Incident edge per vertex in slots `[LEFT, RIGHT, DOWN, UP]`.
    pub vertex_edges: Vec<[u32; 4]>,
    /// Elementary edges on each leaf face (left, right, bottom, top); the
    /// second slot is [`NONE`] unless the face is split by a hanging node.
    pub face_edges: Vec<[[u32; 2]; 4]>,
    /// Hanging midpoint per leaf face, or [`NONE`].
    pub face_mid: Vec<[u32; 4]>,
    pub owner: Vec<u32>,
    vertex_leaf_offsets: Vec<u32>,
    vertex_leaf_list: Vec<u32>,
    leaf_index: FxHashMap<CellKey, u32>,
    domain: Rect,
    brick: (u32, u32),
    finest: u8,
}

impl MeshView {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn brick(&self) -> (u32, u32) {
        self.brick
    }

    pub fn is_hanging(&self, v: u32) -> bool {
        self.hanging_of[v as usize] != NONE
    }

    pub fn hanging_node(&self, v: u32) -> Option<&HangingNode> {
        let h = self.hanging_of[v as usize];
        (h != NONE).then(|| &self.hanging[h as usize])
    }

    /// Leaves having `v` as a corner, in leaf order.
    pub fn vertex_leaves(&self, v: u32) -> &[u32] {
        let a = self.vertex_leaf_offsets[v as usize] as usize;
        let b = self.vertex_leaf_offsets[v as usize + 1] as usize;
        &self.vertex_leaf_list[a..b]
    }

    /// Owner of a vertex: the owner of its lowest-index incident leaf.
    ///
    /// Hanging vertices take the owner of the coarse leaf.
    pub fn vertex_owner(&self, v: u32) -> u32 {
        match self.hanging_node(v) {
            Some(h) => self.owner[h.leaf as usize],
            None => self.owner[self.vertex_leaves(v)[0] as usize],
        }
    }

    /// Smallest leaf diameter.
    pub fn h_min(&self) -> f64 {
        self.leaves.iter().map(Cell::diameter).fold(f64::INFINITY, f64::min)
    }

    pub fn leaf_of_key(&self, key: CellKey) -> Option<u32> {
        self.leaf_index.get(&key).copied()
    }

    /// Leaf containing `(x, y)`; points on shared boundaries resolve to either side.
    pub fn locate(&self, x: f64, y: f64) -> Option<u32> {
        let d = self.domain;
        let tol = 1e-12 * d.width().max(d.height());
        if x < d.x_min - tol || x > d.x_max + tol || y < d.y_min - tol || y > d.y_max + tol {
            return None;
        }
        let r = self.finest;
        let nx = (self.brick.0 as u64) << r;
        let ny = (self.brick.1 as u64) << r;
        let gx = (((x - d.x_min) / d.width()) * nx as f64).floor().clamp(0.0, (nx - 1) as f64) as u32;
        let gy = (((y - d.y_min) / d.height()) * ny as f64).floor().clamp(0.0, (ny - 1) as f64) as u32;
        let fine = CellKey::new(r, gx, gy);
        (0..=r).rev().find_map(|l| self.leaf_of_key(fine.ancestor(l)))
    }

    /// Same brick and domain.
    pub fn compatible(&self, other: &MeshView) -> bool {
        self.brick == other.brick && self.domain == other.domain
    }
}

impl Forest {
    /// Flatten the leaves into a mesh with hanging-node registry.
    ///
    /// `partition` assigns an owner per leaf; `None` gives every leaf owner 0.
    pub fn extract_mesh(&self, partition: Option<&[u32]>) -> Result<MeshView> {
        let owner = match partition {
            Some(p) if p.len() != self.leaves.len() => {
                return Err(Error::DimensionMismatch { expected: self.leaves.len(), got: p.len() })
            }
            Some(p) => p.to_vec(),
            None => vec![0; self.leaves.len()],
        };
        let r = self.finest_level();
        let (nx, ny) = self.lattice(r);
        let stride = ny as u64 + 1;
        let pkey = |gx: u32, gy: u32| gx as u64 * stride + gy as u64;
        let [rx, ry] = self.root_extent();
        let hx = rx * 0.5f64.powi(r as i32);
        let hy = ry * 0.5f64.powi(r as i32);

        let mut index: FxHashMap<u64, u32> = FxHashMap::default();
        index.reserve(self.leaves.len() + self.leaves.len() / 2 + 16);
        let mut lattice: Vec<[u32; 2]> = Vec::new();
        let mut cell_to_vertex = Vec::with_capacity(self.leaves.len());
        for c in &self.leaves {
            let s = 1u32 << (r - c.level);
            let (x0, y0) = (c.key.i * s, c.key.j * s);
            let mut cv = [0u32; 4];
            for (n, (gx, gy)) in [(x0, y0), (x0 + s, y0), (x0, y0 + s), (x0 + s, y0 + s)]
                .into_iter()
                .enumerate()
            {
                cv[n] = *index.entry(pkey(gx, gy)).or_insert_with(|| {
                    lattice.push([gx, gy]);
                    (lattice.len() - 1) as u32
                });
            }
            cell_to_vertex.push(cv);
        }
        let nv = lattice.len();
        let vertices: Vec<[f64; 2]> = lattice
            .iter()
            .map(|&[gx, gy]| [self.domain.x_min + gx as f64 * hx, self.domain.y_min + gy as f64 * hy])
            .collect();
        let on_boundary = lattice
            .iter()
            .map(|&[gx, gy]| gx == 0 || gy == 0 || gx == nx || gy == ny)
            .collect();

        // Faces as (start, end) lattice points per leaf in Face order.
        let face_points = |c: &Cell| {
            let s = 1u32 << (r - c.level);
            let (x0, y0) = (c.key.i * s, c.key.j * s);
            (
                s,
                [
                    ([x0, y0], [x0, y0 + s], Axis::Y),
                    ([x0 + s, y0], [x0 + s, y0 + s], Axis::Y),
                    ([x0, y0], [x0 + s, y0], Axis::X),
                    ([x0, y0 + s], [x0 + s, y0 + s], Axis::X),
                ],
            )
        };
        let lookup = |p: [u32; 2]| index.get(&pkey(p[0], p[1])).copied();
        let along = |p: [u32; 2], axis: Axis, d: u32| match axis {
            Axis::X => [p[0] + d, p[1]],
            Axis::Y => [p[0], p[1] + d],
        };

        let mut hanging = Vec::new();
        let mut hanging_of = vec![NONE; nv];
        let mut face_mid = vec![[NONE; 4]; self.leaves.len()];
        for (n, c) in self.leaves.iter().enumerate() {
            let (s, faces) = face_points(c);
            if s < 2 {
                continue;
            }
            for (f, (a, b, axis)) in faces.into_iter().enumerate() {
                if s >= 4
                    && (lookup(along(a, axis, s / 4)).is_some()
                        || lookup(along(a, axis, 3 * s / 4)).is_some())
                {
                    return Err(Error::Precondition(format!(
                        "forest is not 2:1 balanced near leaf {n}"
                    )));
                }
                if let Some(m) = lookup(along(a, axis, s / 2)) {
                    let parents = [lookup(a).unwrap(), lookup(b).unwrap()];
                    hanging_of[m as usize] = hanging.len() as u32;
                    hanging.push(HangingNode {
                        vertex: m,
                        parents,
                        axis,
                        leaf: n as u32,
                        face: Face::ALL[f],
                    });
                    face_mid[n][f] = m;
                }
            }
        }
        for h in &hanging {
            debug_assert!(h.parents.iter().all(|&p| hanging_of[p as usize] == NONE));
        }

        let mut edge_index: FxHashMap<(u32, u32), u32> = FxHashMap::default();
        let mut edges: Vec<Edge> = Vec::new();
        let mut vertex_edges = vec![[NONE; 4]; nv];
        let mut face_edges = vec![[[NONE; 2]; 4]; self.leaves.len()];
        for (n, c) in self.leaves.iter().enumerate() {
            let cv = cell_to_vertex[n];
            // (low, high) corners and this leaf's side slot per face.
            let ends = [(cv[0], cv[2], 1), (cv[1], cv[3], 0), (cv[0], cv[1], 1), (cv[2], cv[3], 0)];
            for (f, &(lo, hi, side)) in ends.iter().enumerate() {
                let axis = if f < 2 { Axis::Y } else { Axis::X };
                let full = if f < 2 { c.extent[1] } else { c.extent[0] };
                let mid = face_mid[n][f];
                let pieces: [(u32, u32, f64); 2] = if mid == NONE {
                    [(lo, hi, full), (NONE, NONE, 0.0)]
                } else {
                    [(lo, mid, 0.5 * full), (mid, hi, 0.5 * full)]
                };
                for (k, &(a, b, len)) in pieces.iter().enumerate() {
                    if a == NONE {
                        continue;
                    }
                    let e = *edge_index.entry((a.min(b), a.max(b))).or_insert_with(|| {
                        edges.push(Edge { v: [a, b], axis, len, cells: [NONE; 2] });
                        let e = (edges.len() - 1) as u32;
                        let (sl, sh) = match axis {
                            Axis::X => (RIGHT, LEFT),
                            Axis::Y => (UP, DOWN),
                        };
                        vertex_edges[a as usize][sl] = e;
                        vertex_edges[b as usize][sh] = e;
                        e
                    });
                    edges[e as usize].cells[side] = n as u32;
                    face_edges[n][f][k] = e;
                }
            }
        }

        let mut counts = vec![0u32; nv + 1];
        for cv in &cell_to_vertex {
            for &v in cv {
                counts[v as usize + 1] += 1;
            }
        }
        for k in 0..nv {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut list = vec![0u32; counts[nv] as usize];
        for (n, cv) in cell_to_vertex.iter().enumerate() {
            for &v in cv {
                list[fill[v as usize] as usize] = n as u32;
                fill[v as usize] += 1;
            }
        }

        Ok(MeshView {
            leaf_index: self.leaves.iter().enumerate().map(|(n, c)| (c.key, n as u32)).collect(),
            leaves: self.leaves.clone(),
            vertices,
            on_boundary,
            cell_to_vertex,
            edges,
            hanging,
            hanging_of,
            vertex_edges,
            face_edges,
            face_mid,
            owner,
            vertex_leaf_offsets: counts,
            vertex_leaf_list: list,
            domain: self.domain,
            brick: (self.mx, self.my),
            finest: r,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l_config() -> Forest {
        // Left half at level 1 (two leaves), right bottom split once more.
        let mut f = Forest::new_brick(1, 1, Rect::unit(), 1).unwrap();
        f.refine(&[CellKey::new(1, 1, 0)]).unwrap();
        f
    }

    #[test]
    fn uniform_two_by_two() {
        let f = Forest::new_brick(1, 1, Rect::unit(), 1).unwrap();
        let m = f.extract_mesh(None).unwrap();
        assert_eq!(m.n_vertices(), 9);
        assert!(m.hanging.is_empty());
        assert_eq!(m.edges.len(), 12);
        assert_eq!(m.on_boundary.iter().filter(|b| **b).count(), 8);
    }

    #[test]
    fn single_leaf() {
        let f = Forest::new_brick(1, 1, Rect::unit(), 0).unwrap();
        let m = f.extract_mesh(None).unwrap();
        assert_eq!((m.n_vertices(), m.edges.len(), m.hanging.len()), (4, 4, 0));
        assert_eq!(m.vertices[m.cell_to_vertex[0][3] as usize], [1.0, 1.0]);
    }

    #[test]
    fn one_coarse_face_hangs() {
        // A level-0 tree next to a tree refined once.
        let mut f = Forest::new_brick(2, 1, Rect::new(0.0, 0.0, 2.0, 1.0).unwrap(), 0).unwrap();
        f.refine(&[CellKey::new(0, 1, 0)]).unwrap();
        let m = f.extract_mesh(None).unwrap();
        assert_eq!(m.hanging.len(), 1);
        let h = m.hanging[0];
        assert_eq!(m.vertices[h.vertex as usize], [1.0, 0.5]);
        let [p, q] = h.parents;
        assert_eq!(m.vertices[p as usize], [1.0, 0.0]);
        assert_eq!(m.vertices[q as usize], [1.0, 1.0]);
        assert_eq!(h.axis, Axis::Y);
        assert_eq!(h.face, Face::Right);
        assert_eq!(m.face_edges[h.leaf as usize][1].iter().filter(|&&e| e != NONE).count(), 2);
    }

    #[test]
    fn hanging_is_midpoint_of_parents() {
        let m = l_config().extract_mesh(None).unwrap();
        assert_eq!(m.hanging.len(), 2);
        for h in &m.hanging {
            let p = m.vertices[h.parents[0] as usize];
            let q = m.vertices[h.parents[1] as usize];
            let v = m.vertices[h.vertex as usize];
            assert!((0.5 * (p[0] + q[0]) - v[0]).abs() < 1e-15);
            assert!((0.5 * (p[1] + q[1]) - v[1]).abs() < 1e-15);
        }
        assert!(m.edges.iter().all(|e| e.len > 0.0));
    }

    #[test]
    fn unbalanced_rejected() {
        let mut f = Forest::new_brick(1, 1, Rect::unit(), 1).unwrap();
        f.refine(&[CellKey::new(1, 0, 0)]).unwrap();
        f.refine(&[CellKey::new(2, 1, 1)]).unwrap();
        assert!(matches!(f.extract_mesh(None), Err(Error::Precondition(_))));
    }

    #[test]
    fn edge_adjacency_is_consistent() {
        let mut f = l_config();
        f.refine(&[CellKey::new(2, 2, 1)]).unwrap();
        f.balance_2to1();
        let m = f.extract_mesh(None).unwrap();
        for (e, edge) in m.edges.iter().enumerate() {
            let (lo, hi) = match edge.axis {
                Axis::X => (RIGHT, LEFT),
                Axis::Y => (UP, DOWN),
            };
            assert_eq!(m.vertex_edges[edge.v[0] as usize][lo], e as u32);
            assert_eq!(m.vertex_edges[edge.v[1] as usize][hi], e as u32);
            let a = m.vertices[edge.v[0] as usize];
            let b = m.vertices[edge.v[1] as usize];
            let k = edge.axis.index();
            assert!((b[k] - a[k] - edge.len).abs() < 1e-15);
            assert!(edge.cells.iter().any(|&c| c != NONE));
        }
    }

    #[test]
    fn locate_finds_containing_leaf() {
        let m = l_config().extract_mesh(None).unwrap();
        for (x, y) in [(0.1, 0.1), (0.9, 0.9), (0.6, 0.2), (1.0, 1.0), (0.0, 0.0)] {
            let n = m.locate(x, y).unwrap();
            assert!(m.leaves[n as usize].contains(x, y, 1e-12));
        }
        assert!(m.locate(1.5, 0.5).is_none());
    }
}
