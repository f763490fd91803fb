//! Quadtree forest over a rectangular brick of root cells.
//!
//! Cells are addressed on a global integer lattice per level: at level `l`
//! the brick is an `(mx * 2^l) x (my * 2^l)` grid and a cell is the triple
//! `(level, i, j)`. Tree id and Morton index are derived from it; the
//! Morton curve interleaves bits with `x` as the low bit.

mod mesh;
mod text;

pub use mesh::{Axis, Edge, HangingNode, MeshView, DOWN, LEFT, RIGHT, UP};

use crate::{Error, Result};
use rustc_hash::{FxHashMap, FxHashSet};

/// Deepest level supported by the integer lattice.
pub const LEVEL_LIMIT: u8 = 24;
/// Default refinement cap.
pub const DEFAULT_MAX_LEVEL: u8 = 14;
/// Reference level at which Morton indices of different levels are compared.
const SORT_LEVEL: u32 = 30;

/// Axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Rect> {
        let r = Rect { x_min, y_min, x_max, y_max };
        r.validate()?;
        Ok(r)
    }

    pub fn unit() -> Rect {
        Rect { x_min: 0.0, y_min: 0.0, x_max: 1.0, y_max: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::InvalidArgument(format!("degenerate domain {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Lattice address of a cell: level plus global integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub level: u8,
    pub i: u32,
    pub j: u32,
}

impl CellKey {
    pub fn new(level: u8, i: u32, j: u32) -> CellKey {
        CellKey { level, i, j }
    }

    pub fn parent(self) -> Option<CellKey> {
        (self.level > 0).then(|| CellKey::new(self.level - 1, self.i >> 1, self.j >> 1))
    }

    /// Children in Morton order: lower-left, lower-right, upper-left, upper-right.
    pub fn children(self) -> [CellKey; 4] {
        let (l, i, j) = (self.level + 1, self.i << 1, self.j << 1);
        [
            CellKey::new(l, i, j),
            CellKey::new(l, i + 1, j),
            CellKey::new(l, i, j + 1),
            CellKey::new(l, i + 1, j + 1),
        ]
    }

    /// Position among the siblings, `0..4`.
    pub fn child_index(self) -> usize {
        ((self.i & 1) | ((self.j & 1) << 1)) as usize
    }

    /// The four siblings (including `self`), or `None` for a root.
    pub fn family(self) -> Option<[CellKey; 4]> {
        self.parent().map(CellKey::children)
    }

    /// Ancestor at `level` (which must not exceed `self.level`).
    pub fn ancestor(self, level: u8) -> CellKey {
        let s = self.level - level;
        CellKey::new(level, self.i >> s, self.j >> s)
    }
}

/// Face directions of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Face {
    Left,
    Right,
    Bottom,
    Top,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::Left, Face::Right, Face::Bottom, Face::Top];

    fn offset(self) -> (i64, i64) {
        match self {
            Face::Left => (-1, 0),
            Face::Right => (1, 0),
            Face::Bottom => (0, -1),
            Face::Top => (0, 1),
        }
    }
}

/// A leaf of the forest with its physical placement.
#[derive(Clone, Copy, Debug)]
pub struct Cell {
    pub tree_id: u32,
    pub level: u8,
    pub morton: u64,
    pub anchor: [f64; 2],
    pub extent: [f64; 2],
    key: CellKey,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Cell) -> bool {
        self.key == other.key
    }
}

impl Eq for Cell {}

impl Cell {
    pub fn key(&self) -> CellKey {
        self.key
    }

    pub fn area(&self) -> f64 {
        self.extent[0] * self.extent[1]
    }

    pub fn center(&self) -> [f64; 2] {
        [self.anchor[0] + 0.5 * self.extent[0], self.anchor[1] + 0.5 * self.extent[1]]
    }

    /// Cell diameter.
    pub fn diameter(&self) -> f64 {
        self.extent[0].hypot(self.extent[1])
    }

    /// True when `(x, y)` lies in the closed cell enlarged by `tol * extent`.
    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        let ex = tol * self.extent[0];
        let ey = tol * self.extent[1];
        x >= self.anchor[0] - ex
            && x <= self.anchor[0] + self.extent[0] + ex
            && y >= self.anchor[1] - ey
            && y <= self.anchor[1] + self.extent[1] + ey
    }

    /// Corner coordinates in lexicographic order.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [x0, y0] = self.anchor;
        let x1 = x0 + self.extent[0];
        let y1 = y0 + self.extent[1];
        [[x0, y0], [x1, y0], [x0, y1], [x1, y1]]
    }
}

/// Outcome of a refine or coarsen request.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SkipReport {
    pub applied: usize,
    pub skipped: Vec<CellKey>,
}

/// Brick of quadtrees with Morton-ordered leaves.
#[derive(Clone, Debug)]
pub struct Forest {
    mx: u32,
    my: u32,
    domain: Rect,
    min_level: u8,
    max_level: u8,
    leaves: Vec<Cell>,
}

impl PartialEq for Forest {
    fn eq(&self, other: &Forest) -> bool {
        self.mx == other.mx
            && self.my == other.my
            && self.domain == other.domain
            && self.min_level == other.min_level
            && self.max_level == other.max_level
            && self.leaves.len() == other.leaves.len()
            && self.leaves.iter().zip(&other.leaves).all(|(a, b)| a.key == b.key)
    }
}

pub fn morton_encode(x: u32, y: u32) -> u64 {
    spread(x) | (spread(y) << 1)
}

pub fn morton_decode(m: u64) -> (u32, u32) {
    (compact(m), compact(m >> 1))
}

fn spread(x: u32) -> u64 {
    let mut v = x as u64;
    v = (v | (v << 16)) & 0x0000_ffff_0000_ffff;
    v = (v | (v << 8)) & 0x00ff_00ff_00ff_00ff;
    v = (v | (v << 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    v = (v | (v << 2)) & 0x3333_3333_3333_3333;
    (v | (v << 1)) & 0x5555_5555_5555_5555
}

fn compact(m: u64) -> u32 {
    let mut v = m & 0x5555_5555_5555_5555;
    v = (v | (v >> 1)) & 0x3333_3333_3333_3333;
    v = (v | (v >> 2)) & 0x0f0f_0f0f_0f0f_0f0f;
    v = (v | (v >> 4)) & 0x00ff_00ff_00ff_00ff;
    v = (v | (v >> 8)) & 0x0000_ffff_0000_ffff;
    ((v | (v >> 16)) & 0xffff_ffff) as u32
}

impl Forest {
    /// Brick of `mx x my` root cells over `domain`, uniformly refined to `uniform_level`.
    pub fn new_brick(mx: u32, my: u32, domain: Rect, uniform_level: u8) -> Result<Forest> {
        if mx == 0 || my == 0 {
            return Err(Error::InvalidArgument("brick dimensions must be positive".into()));
        }
        domain.validate()?;
        let max_level = DEFAULT_MAX_LEVEL.max(uniform_level);
        check_lattice(mx, my, max_level)?;
        let mut forest = Forest { mx, my, domain, min_level: 0, max_level, leaves: Vec::new() };
        let n = 1u32 << uniform_level;
        let per_tree = (n as usize) * (n as usize);
        let mut leaves = Vec::with_capacity(per_tree * (mx * my) as usize);
        for ty in 0..my {
            for tx in 0..mx {
                for m in 0..per_tree as u64 {
                    let (li, lj) = morton_decode(m);
                    let key = CellKey::new(uniform_level, tx * n + li, ty * n + lj);
                    leaves.push(forest.make_cell(key));
                }
            }
        }
        forest.leaves = leaves;
        Ok(forest)
    }

    /// Replace the level bounds. Existing leaves must lie within them.
    pub fn with_level_bounds(mut self, min_level: u8, max_level: u8) -> Result<Forest> {
        self.set_level_bounds(min_level, max_level)?;
        Ok(self)
    }

    pub fn set_level_bounds(&mut self, min_level: u8, max_level: u8) -> Result<()> {
        if min_level > max_level {
            return Err(Error::InvalidArgument(format!(
                "min_level {min_level} exceeds max_level {max_level}"
            )));
        }
        check_lattice(self.mx, self.my, max_level)?;
        if let Some(c) = self.leaves.iter().find(|c| c.level > max_level) {
            return Err(Error::InvalidArgument(format!(
                "leaf at level {} exceeds max_level {max_level}",
                c.level
            )));
        }
        self.min_level = min_level;
        self.max_level = max_level;
        Ok(())
    }

    pub fn brick(&self) -> (u32, u32) {
        (self.mx, self.my)
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn min_level(&self) -> u8 {
        self.min_level
    }

    pub fn max_level(&self) -> u8 {
        self.max_level
    }

    pub fn leaves(&self) -> &[Cell] {
        &self.leaves
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Extent of a root cell.
    pub fn root_extent(&self) -> [f64; 2] {
        [self.domain.width() / self.mx as f64, self.domain.height() / self.my as f64]
    }

    /// Deepest level among the leaves.
    pub fn finest_level(&self) -> u8 {
        self.leaves.iter().map(|c| c.level).max().unwrap_or(0)
    }

    /// Lattice size `(nx, ny)` at `level`.
    pub fn lattice(&self, level: u8) -> (u32, u32) {
        (self.mx << level, self.my << level)
    }

    pub fn in_bounds(&self, key: CellKey) -> bool {
        let (nx, ny) = self.lattice(key.level);
        key.i < nx && key.j < ny
    }

    /// Build the cell record for a lattice address.
    pub fn make_cell(&self, key: CellKey) -> Cell {
        let l = key.level;
        let tx = key.i >> l;
        let ty = key.j >> l;
        let mask = (1u32 << l) - 1;
        let scale = 0.5f64.powi(l as i32);
        let [rx, ry] = self.root_extent();
        let extent = [rx * scale, ry * scale];
        Cell {
            tree_id: ty * self.mx + tx,
            level: l,
            morton: morton_encode(key.i & mask, key.j & mask),
            anchor: [
                self.domain.x_min + key.i as f64 * extent[0],
                self.domain.y_min + key.j as f64 * extent[1],
            ],
            extent,
            key,
        }
    }

    /// Total-order key: tree id, then Morton index at a common reference level.
    pub fn sort_key(cell: &Cell) -> (u32, u64) {
        (cell.tree_id, cell.morton << (2 * (SORT_LEVEL - cell.level as u32)))
    }

    fn sort_leaves(&mut self) {
        self.leaves.sort_unstable_by_key(Forest::sort_key);
    }

    fn key_set(&self) -> FxHashSet<CellKey> {
        self.leaves.iter().map(|c| c.key).collect()
    }

    fn key_index(&self) -> FxHashMap<CellKey, u32> {
        self.leaves.iter().enumerate().map(|(n, c)| (c.key, n as u32)).collect()
    }

    /// Same-level neighbor across `face`, if inside the brick.
    pub fn face_neighbor_key(&self, key: CellKey, face: Face) -> Option<CellKey> {
        let (di, dj) = face.offset();
        let i = key.i as i64 + di;
        let j = key.j as i64 + dj;
        let (nx, ny) = self.lattice(key.level);
        (i >= 0 && j >= 0 && i < nx as i64 && j < ny as i64)
            .then(|| CellKey::new(key.level, i as u32, j as u32))
    }

    /// Replace each listed leaf by its four children.
    ///
    /// Leaves at `max_level` are skipped and reported. The result is not
    /// balanced; call [`Forest::balance_2to1`] afterwards.
    pub fn refine(&mut self, cells: &[CellKey]) -> Result<SkipReport> {
        let index = self.key_index();
        let mut mark = vec![false; self.leaves.len()];
        let mut report = SkipReport::default();
        for key in cells {
            let n = *index.get(key).ok_or_else(|| {
                Error::InvalidArgument(format!("{key:?} is not a current leaf"))
            })?;
            if key.level >= self.max_level {
                report.skipped.push(*key);
            } else if !mark[n as usize] {
                mark[n as usize] = true;
                report.applied += 1;
            }
        }
        if report.applied == 0 {
            return Ok(report);
        }
        let mut leaves = Vec::with_capacity(self.leaves.len() + 3 * report.applied);
        for (c, m) in self.leaves.iter().zip(&mark) {
            if *m {
                leaves.extend(c.key.children().iter().map(|k| self.make_cell(*k)));
            } else {
                leaves.push(*c);
            }
        }
        self.leaves = leaves;
        Ok(report)
    }

    /// Replace each complete sibling family by its parent.
    ///
    /// Families at `min_level` and families whose removal would leave an
    /// edge neighbor two levels finer than the parent are skipped and reported.
    pub fn coarsen(&mut self, families: &[[CellKey; 4]]) -> Result<SkipReport> {
        let mut set = self.key_set();
        let mut report = SkipReport::default();
        let mut merged: FxHashSet<CellKey> = FxHashSet::default();
        for fam in families {
            let parent = fam[0].parent().ok_or_else(|| {
                Error::InvalidArgument(format!("{:?} is a root and has no family", fam[0]))
            })?;
            let mut sorted = *fam;
            sorted.sort();
            let mut expected = parent.children();
            expected.sort();
            if sorted != expected {
                return Err(Error::InvalidArgument(format!(
                    "{fam:?} is not a complete sibling set"
                )));
            }
            if merged.contains(&parent) {
                continue;
            }
            if let Some(k) = fam.iter().find(|k| !set.contains(k)) {
                return Err(Error::InvalidArgument(format!("{k:?} is not a current leaf")));
            }
            if fam[0].level <= self.min_level || !self.coarsen_is_balanced(&set, parent) {
                report.skipped.push(parent);
                continue;
            }
            for k in fam {
                set.remove(k);
            }
            set.insert(parent);
            merged.insert(parent);
            report.applied += 1;
        }
        if report.applied == 0 {
            return Ok(report);
        }
        let mut leaves = Vec::with_capacity(self.leaves.len());
        for c in &self.leaves {
            match c.key.parent() {
                Some(p) if merged.contains(&p) => {
                    if c.key.child_index() == 0 {
                        leaves.push(self.make_cell(p));
                    }
                }
                _ => leaves.push(*c),
            }
        }
        self.leaves = leaves;
        Ok(report)
    }

    /// Whether merging the children of `parent` keeps every face pair within one level.
    fn coarsen_is_balanced(&self, set: &FxHashSet<CellKey>, parent: CellKey) -> bool {
        for child in parent.children() {
            for face in Face::ALL {
                let Some(nk) = self.face_neighbor_key(child, face) else { continue };
                if nk.parent() == Some(parent) {
                    continue;
                }
                if covering_leaf(set, nk).is_none() {
                    return false;
                }
            }
        }
        true
    }

    /// Refine until every pair of face-adjacent leaves differs by at most one level.
    ///
    /// Returns the number of leaves split.
    pub fn balance_2to1(&mut self) -> usize {
        let mut set = self.key_set();
        let mut stack: Vec<CellKey> = self.leaves.iter().rev().map(|c| c.key).collect();
        let mut splits = 0;
        while let Some(c) = stack.pop() {
            if c.level < 2 || !set.contains(&c) {
                continue;
            }
            for face in Face::ALL {
                let Some(nk) = self.face_neighbor_key(c, face) else { continue };
                if set.contains(&nk) || set.contains(&nk.ancestor(c.level - 1)) {
                    continue;
                }
                let coarse = (0..c.level - 1)
                    .rev()
                    .map(|lev| nk.ancestor(lev))
                    .find(|k| set.contains(k));
                if let Some(k) = coarse {
                    set.remove(&k);
                    for ch in k.children() {
                        set.insert(ch);
                        stack.push(ch);
                    }
                    stack.push(c);
                    splits += 1;
                    break;
                }
            }
        }
        if splits > 0 {
            self.leaves = set.into_iter().map(|k| self.make_cell(k)).collect();
            self.sort_leaves();
        }
        splits
    }

    /// True when all face-adjacent leaf pairs differ by at most one level.
    pub fn is_balanced(&self) -> bool {
        let set = self.key_set();
        self.leaves.iter().all(|c| {
            c.level < 2
                || Face::ALL.iter().all(|&f| match self.face_neighbor_key(c.key, f) {
                    None => true,
                    Some(nk) => (0..c.level - 1).all(|lev| !set.contains(&nk.ancestor(lev))),
                })
        })
    }

    /// Leaf covering the region of `key` (the leaf itself or an ancestor), if any.
    pub fn covering_leaf(&self, key: CellKey) -> Option<CellKey> {
        covering_leaf(&self.key_set(), key)
    }

    /// Contiguous Morton blocks, sizes differing by at most one.
    ///
    /// With more parts than leaves each leaf gets its own owner and the
    /// surplus parts stay empty.
    pub fn partition_morton(&self, n_parts: usize) -> Result<Vec<u32>> {
        partition_sizes(self.leaves.len(), n_parts).map(|sizes| {
            sizes
                .iter()
                .enumerate()
                .flat_map(|(p, &s)| std::iter::repeat_n(p as u32, s))
                .collect()
        })
    }

    /// Leaves of a complete sibling family whose members are all current leaves.
    pub fn complete_families(&self) -> Vec<[CellKey; 4]> {
        let mut out = Vec::new();
        let mut n = 0;
        while n + 3 < self.leaves.len() {
            let k = self.leaves[n].key;
            if k.level > 0 && k.child_index() == 0 {
                let fam = k.family().unwrap();
                if (1..4).all(|d| self.leaves[n + d].key == fam[d]) {
                    out.push(fam);
                    n += 4;
                    continue;
                }
            }
            n += 1;
        }
        out
    }

    pub(crate) fn from_keys(
        mx: u32,
        my: u32,
        domain: Rect,
        min_level: u8,
        max_level: u8,
        keys: &[CellKey],
    ) -> Result<Forest> {
        let mut forest = Forest { mx, my, domain, min_level: 0, max_level: LEVEL_LIMIT, leaves: Vec::new() };
        check_lattice(mx, my, max_level)?;
        forest.leaves = keys.iter().map(|k| forest.make_cell(*k)).collect();
        forest.set_level_bounds(min_level, max_level)?;
        Ok(forest)
    }
}

/// Block sizes of the Morton partition.
pub fn partition_sizes(n: usize, n_parts: usize) -> Result<Vec<usize>> {
    if n_parts == 0 {
        return Err(Error::InvalidArgument("n_parts must be positive".into()));
    }
    let base = n / n_parts;
    let rem = n % n_parts;
    Ok((0..n_parts).map(|p| base + usize::from(p < rem)).collect())
}

fn covering_leaf(set: &FxHashSet<CellKey>, key: CellKey) -> Option<CellKey> {
    (0..=key.level).rev().map(|lev| key.ancestor(lev)).find(|k| set.contains(k))
}

fn check_lattice(mx: u32, my: u32, max_level: u8) -> Result<()> {
    if max_level > LEVEL_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "max_level {max_level} exceeds the supported limit {LEVEL_LIMIT}"
        )));
    }
    let span = (mx.max(my) as u64) << (max_level as u64 + 1);
    if span >= 1u64 << 31 {
        return Err(Error::InvalidArgument(format!(
            "brick {mx}x{my} too large for max_level {max_level}"
        )));
    }
    Ok(())
}
