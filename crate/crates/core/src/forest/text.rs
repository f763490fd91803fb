//! Plain-text forest serialization.
//!
//! ```text
//! quadrec-forest 1
//! brick 4 8
//! domain 0 0 1 1
//! levels 0 14
//! leaves 32
//! 0 0 0
//! ...
//! ```
//! Each leaf line is `tree_id level morton`. Floats use the shortest
//! round-trip representation, so reading back is bit-exact.

use super::{morton_decode, CellKey, Forest, Rect};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

const MAGIC: &str = "quadrec-forest 1";

impl Forest {
    pub fn to_text(&self) -> String {
        let d = self.domain;
        let mut s = String::with_capacity(32 * self.leaves.len() + 128);
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "brick {} {}", self.mx, self.my);
        let _ = writeln!(s, "domain {} {} {} {}", d.x_min, d.y_min, d.x_max, d.y_max);
        let _ = writeln!(s, "levels {} {}", self.min_level, self.max_level);
        let _ = writeln!(s, "leaves {}", self.leaves.len());
        for c in &self.leaves {
            let _ = writeln!(s, "{} {} {}", c.tree_id, c.level, c.morton);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Forest> {
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l.trim()));
        let mut next = |what: &str| {
            lines
                .find(|(_, l)| !l.is_empty())
                .ok_or_else(|| Error::Parse { line: 0, msg: format!("missing {what}") })
        };
        let (n, l) = next("header")?;
        if l != MAGIC {
            return Err(Error::Parse { line: n, msg: format!("expected `{MAGIC}`") });
        }
        let (n, l) = next("brick")?;
        let b: Vec<u32> = fields(n, l, "brick", 2)?;
        let (n, l) = next("domain")?;
        let d: Vec<f64> = fields(n, l, "domain", 4)?;
        let domain = Rect::new(d[0], d[1], d[2], d[3])
            .map_err(|e| Error::Parse { line: n, msg: e.to_string() })?;
        let (n, l) = next("levels")?;
        let lv: Vec<u8> = fields(n, l, "levels", 2)?;
        let (n, l) = next("leaves")?;
        let count: Vec<usize> = fields(n, l, "leaves", 1)?;
        let (mx, my) = (b[0], b[1]);
        if mx == 0 || my == 0 {
            return Err(Error::Parse { line: n, msg: "brick dimensions must be positive".into() });
        }
        let mut keys = Vec::with_capacity(count[0]);
        for _ in 0..count[0] {
            let (n, l) = next("leaf line")?;
            let mut it = l.split_whitespace();
            let parse_err = |what: &str| Error::Parse { line: n, msg: format!("bad {what}") };
            let tree: u32 = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| parse_err("tree id"))?;
            let level: u8 = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| parse_err("level"))?;
            let morton: u64 = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| parse_err("morton"))?;
            if it.next().is_some() || tree >= mx * my || level > lv[1] || morton >> (2 * level as u32) != 0 {
                return Err(Error::Parse { line: n, msg: "leaf out of range".into() });
            }
            let (li, lj) = morton_decode(morton);
            let (tx, ty) = (tree % mx, tree / mx);
            keys.push(CellKey::new(level, (tx << level) + li, (ty << level) + lj));
        }
        if let Some((n, _)) = lines.find(|(_, l)| !l.is_empty()) {
            return Err(Error::Parse { line: n, msg: "trailing content".into() });
        }
        let forest = Forest::from_keys(mx, my, domain, lv[0], lv[1], &keys)
            .map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
        let area: f64 = forest.leaves.iter().map(|c| c.area()).sum();
        let ordered = forest
            .leaves
            .windows(2)
            .all(|w| Forest::sort_key(&w[0]) < Forest::sort_key(&w[1]));
        if !ordered || ((area - domain.area()) / domain.area()).abs() > 1e-12 {
            return Err(Error::Parse { line: 0, msg: "leaves do not tile the domain in order".into() });
        }
        Ok(forest)
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Forest> {
        Forest::from_text(&std::fs::read_to_string(path)?)
    }
}

fn fields<T: std::str::FromStr>(line: usize, text: &str, tag: &str, n: usize) -> Result<Vec<T>> {
    let mut it = text.split_whitespace();
    if it.next() != Some(tag) {
        return Err(Error::Parse { line, msg: format!("expected `{tag}`") });
    }
    let vals: Vec<T> = it
        .map(|v| v.parse().map_err(|_| Error::Parse { line, msg: format!("bad value `{v}`") }))
        .collect::<Result<_>>()?;
    if vals.len() != n {
        return Err(Error::Parse { line, msg: format!("`{tag}` takes {n} values") });
    }
    Ok(vals)
}
