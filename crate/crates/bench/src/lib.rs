//! Fixtures shared by the kernel benchmarks in `benches/`.

use quadrec::{Cell, Forest, Rect, Result};

/// Unit-square forest refined `extra` times towards the origin corner on top of
/// a uniform `base` level, then balanced.
pub fn graded_forest(base: u8, extra: u8) -> Result<Forest> {
    let mut forest = Forest::new_brick(1, 1, Rect::unit(), base)?;
    for k in 0..extra {
        let reach = 0.5f64.powi(k as i32 + 1);
        let keys: Vec<_> = forest
            .leaves()
            .iter()
            .filter(|c| c.level == base + k && c.center()[0] + c.center()[1] < reach)
            .map(Cell::key)
            .collect();
        forest.refine(&keys)?;
        forest.balance_2to1();
    }
    Ok(forest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_forest_reaches_its_finest_level() {
        let f = graded_forest(4, 3).unwrap();
        assert_eq!(f.finest_level(), 7);
        assert!(f.len() > 256);
    }
}
