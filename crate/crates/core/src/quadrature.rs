//! Gauss-Legendre rules on `[0, 1]` and tensor products on cells.

use crate::forest::Cell;

const G1: [(f64, f64); 1] = [(0.0, 2.0)];
const G2: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];
const G3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 0.555_555_555_555_555_6),
    (0.0, 0.888_888_888_888_888_9),
    (0.774_596_669_241_483_4, 0.555_555_555_555_555_6),
];
const G4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];
const G5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
];

/// Nodes and weights on `[0, 1]` for `n` in `1..=5` (weights sum to 1).
pub fn gauss_unit(n: usize) -> Vec<(f64, f64)> {
    let rule: &[(f64, f64)] = match n {
        1 => &G1,
        2 => &G2,
        3 => &G3,
        4 => &G4,
        5 => &G5,
        _ => panic!("Gauss-Legendre order {n} not tabulated (1..=5)"),
    };
    rule.iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// Tensor rule on a cell: `(local (s, t) in [0,1]^2, physical (x, y), weight)`.
pub fn cell_points(cell: &Cell, n: usize) -> Vec<([f64; 2], [f64; 2], f64)> {
    let g = gauss_unit(n);
    let area = cell.area();
    let mut out = Vec::with_capacity(n * n);
    for &(t, wt) in &g {
        for &(s, ws) in &g {
            let x = cell.anchor[0] + s * cell.extent[0];
            let y = cell.anchor[1] + t * cell.extent[1];
            out.push(([s, t], [x, y], ws * wt * area));
        }
    }
    out
}
