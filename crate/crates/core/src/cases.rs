//! Benchmark problems and user-defined piecewise-constant region problems.

use crate::assembly::{AdrCoefficients, ScalarField};
use crate::forest::{Forest, Rect, DEFAULT_MAX_LEVEL};
use crate::space::DirichletSpec;
use crate::{Error, Result};
use serde::Deserialize;
use std::f64::consts::FRAC_PI_4;
use std::path::Path;
use std::sync::Arc;

pub type GradientField = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;

/// Boundary points are matched against domain sides with this tolerance.
const SIDE_TOL: f64 = 1e-12;

/// Analytic solution and its gradient.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarField,
    pub grad: GradientField,
}

impl ExactSolution {
    pub fn new(
        u: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
    ) -> ExactSolution {
        ExactSolution { u: Arc::new(u), grad: Arc::new(grad) }
    }
}

/// Brick of root trees refined uniformly to `level`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialMesh {
    pub brick: (u32, u32),
    pub domain: Rect,
    pub level: u8,
}

impl InitialMesh {
    pub fn build(&self) -> Result<Forest> {
        Forest::new_brick(self.brick.0, self.brick.1, self.domain, self.level)
    }
}

/// Loop parameters a case is meant to be run with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseDefaults {
    pub tol: f64,
    pub i_max: usize,
    pub min_level: u8,
    pub max_level: u8,
    /// Cap on `|l_k|` per adaptation, 0 for none.
    pub max_step: u32,
    pub n_coarsen: u32,
    /// Adaptive refinement budget, see [`crate::AdaptConfig::n_ref_auto`].
    pub n_ref_auto: Option<u32>,
}

/// Published value a run can be compared against.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTarget {
    pub quantity: String,
    pub value: f64,
    pub tolerance: f64,
    pub provenance: String,
}

impl ReferenceTarget {
    fn new(quantity: &str, value: f64, tolerance: f64, provenance: &str) -> ReferenceTarget {
        ReferenceTarget {
            quantity: quantity.into(),
            value,
            tolerance,
            provenance: provenance.into(),
        }
    }
}

#[derive(Clone)]
pub struct BenchmarkCase {
    pub name: String,
    pub coefficients: AdrCoefficients,
    pub exact: Option<ExactSolution>,
    pub initial_mesh: InitialMesh,
    pub defaults: CaseDefaults,
    pub reference_targets: Vec<ReferenceTarget>,
}

impl std::fmt::Debug for BenchmarkCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkCase")
            .field("name", &self.name)
            .field("exact", &self.exact.is_some())
            .field("initial_mesh", &self.initial_mesh)
            .field("defaults", &self.defaults)
            .finish_non_exhaustive()
    }
}

pub const CASE_NAMES: [&str; 4] = ["test1", "test2_rect", "test2_circle", "test3"];

/// Case by name; `test3` uses the default angle.
pub fn by_name(name: &str) -> Result<BenchmarkCase> {
    match name {
        "test1" => Ok(test1()),
        "test2_rect" => Ok(test2_rect()),
        "test2_circle" => Ok(test2_circle()),
        "test3" => Ok(test3(FRAC_PI_4)),
        _ => Err(Error::InvalidArgument(format!(
            "unknown case '{name}' (expected one of {})",
            CASE_NAMES.join(", ")
        ))),
    }
}

fn on_side(x: f64, y: f64, d: &Rect) -> bool {
    (x - d.x_min).abs() < SIDE_TOL
        || (x - d.x_max).abs() < SIDE_TOL
        || (y - d.y_min).abs() < SIDE_TOL
        || (y - d.y_max).abs() < SIDE_TOL
}

/// `sinh(a x) / sinh(a)` and `cosh(a x) / sinh(a)` for `a > 0`, `x >= 0`, without overflow.
fn sinh_ratios(a: f64, x: f64) -> (f64, f64) {
    let scale = (a * (x - 1.0)).exp() / -(-2.0 * a).exp_m1();
    let e = (-2.0 * a * x).exp();
    (scale * (1.0 - e), scale * (1.0 + e))
}

/// Layer profile `1 - sinh(x/sqrt(eps))/sinh(1/sqrt(eps))` and its derivative.
fn layer(eps: f64, x: f64) -> (f64, f64) {
    let a = 1.0 / eps.sqrt();
    let (s, c) = sinh_ratios(a, x);
    (1.0 - s, -a * c)
}

/// Diffusion-reaction with boundary layers along the right and top sides.
pub fn test1() -> BenchmarkCase {
    test1_with(1e-4)
}

pub fn test1_with(eps: f64) -> BenchmarkCase {
    let u = move |x: f64, y: f64| layer(eps, x).0 * layer(eps, y).0;
    let grad = move |x: f64, y: f64| {
        let (px, dx) = layer(eps, x);
        let (py, dy) = layer(eps, y);
        [dx * py, px * dy]
    };
    // -eps X'' = 1 - X, so -eps lap(XY) + XY = X + Y - XY.
    let f = move |x: f64, y: f64| {
        let px = layer(eps, x).0;
        let py = layer(eps, y).0;
        px + py - px * py
    };
    let coefficients = AdrCoefficients::new(
        move |_, _| eps,
        |_, _| 0.0,
        |_, _| 1.0,
        f,
        DirichletSpec::everywhere(u),
    );
    BenchmarkCase {
        name: "test1".into(),
        coefficients,
        exact: Some(ExactSolution::new(u, grad)),
        initial_mesh: InitialMesh { brick: (1, 1), domain: Rect::unit(), level: 2 },
        defaults: CaseDefaults { tol: 1e-5, i_max: 10, min_level: 0, max_level: 12, max_step: 3, n_coarsen: 1, n_ref_auto: Some(3) },
        reference_targets: vec![
            ReferenceTarget::new("marking_iterations", 9.0, 0.0, "marking loop converges after 9 iterations"),
            ReferenceTarget::new("metric_iterations", 3.0, 2.0, "metric loop converges after 3 iterations"),
            ReferenceTarget::new("effectivity_min", 0.8, 0.1, "effectivity between 0.8 and 1"),
            ReferenceTarget::new("effectivity_max", 1.0, 0.1, "effectivity between 0.8 and 1"),
            ReferenceTarget::new("adapted_over_uniform_dofs", 0.5, 0.1, "about half the unknowns of uniform refinement"),
        ],
    }
}

pub const TEST2_EPS1: f64 = 5e-5;
pub const TEST2_EPS2: f64 = 1e-1;

/// `(c1, c2)` of the rectilinear-interface solution.
pub fn test2_rect_constants() -> (f64, f64) {
    let (e1, e2) = (TEST2_EPS1, TEST2_EPS2);
    let s = e1.sqrt();
    let ch = (0.5 / s).cosh();
    let sh = (0.5 / s).sinh();
    let c1 = -7.0 * e2 / (8.0 * s * ch + 16.0 * e2 * sh);
    let c2 = 7.0 * s * ch / (4.0 * s * ch + 8.0 * e2 * sh);
    (c1, c2)
}

/// Diffusion-reaction with coefficients jumping across `y = 0.5`.
pub fn test2_rect() -> BenchmarkCase {
    let (e1, e2) = (TEST2_EPS1, TEST2_EPS2);
    let (c1, c2) = test2_rect_constants();
    let s = e1.sqrt();
    let lower = |y: f64| y <= 0.5;
    let u = move |_x: f64, y: f64| {
        if lower(y) {
            1.0 + 2.0 * c1 * (y / s).sinh()
        } else {
            -0.5 * (y - 1.0) * (y + 2.0 * c2)
        }
    };
    let grad = move |_x: f64, y: f64| {
        if lower(y) {
            [0.0, 2.0 * c1 * (y / s).cosh() / s]
        } else {
            [0.0, -0.5 * (2.0 * y + 2.0 * c2 - 1.0)]
        }
    };
    let dirichlet = DirichletSpec::new(
        |_, y| y.abs() < SIDE_TOL || (y - 1.0).abs() < SIDE_TOL,
        |_, y| if y.abs() < SIDE_TOL { 1.0 } else { 0.0 },
    );
    let coefficients = AdrCoefficients::new(
        move |_, y| if lower(y) { e1 } else { e2 },
        |_, _| 0.0,
        move |_, y| if lower(y) { 1.0 } else { 0.0 },
        move |_, y| if lower(y) { 1.0 } else { e2 },
        dirichlet,
    );
    BenchmarkCase {
        name: "test2_rect".into(),
        coefficients,
        exact: Some(ExactSolution::new(u, grad)),
        initial_mesh: InitialMesh { brick: (1, 2), domain: Rect::unit(), level: 2 },
        defaults: CaseDefaults { tol: 1e-6, i_max: 10, min_level: 0, max_level: DEFAULT_MAX_LEVEL, max_step: 3, n_coarsen: 1, n_ref_auto: Some(3) },
        reference_targets: vec![
            ReferenceTarget::new("marking_iterations", 9.0, 0.0, "marking loop takes 9 iterations"),
            ReferenceTarget::new("metric_iterations", 3.0, 2.0, "metric loop breaks after 3 iterations"),
        ],
    }
}

pub const CIRCLE_RADIUS: f64 = 0.25;
pub const EPS_OUTSIDE: f64 = 1.0;
pub const EPS_INSIDE: f64 = 100.0;

/// Piecewise-quadratic solution of the circular-interface problem.
pub fn circle_exact(x: f64, y: f64) -> f64 {
    let r2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
    let rr = CIRCLE_RADIUS * CIRCLE_RADIUS;
    if r2 >= rr {
        0.125 - r2 / (4.0 * EPS_OUTSIDE)
    } else {
        0.125 - r2 / (4.0 * EPS_INSIDE) - rr / 4.0 * (1.0 - 1.0 / EPS_INSIDE)
    }
}

/// Pure diffusion with `eps` jumping across a circle.
pub fn test2_circle() -> BenchmarkCase {
    let rr = CIRCLE_RADIUS * CIRCLE_RADIUS;
    let outside = move |x: f64, y: f64| (x - 0.5).powi(2) + (y - 0.5).powi(2) >= rr;
    let grad = move |x: f64, y: f64| {
        let e = if outside(x, y) { EPS_OUTSIDE } else { EPS_INSIDE };
        [-(x - 0.5) / (2.0 * e), -(y - 0.5) / (2.0 * e)]
    };
    let coefficients = AdrCoefficients::new(
        move |x, y| if outside(x, y) { EPS_OUTSIDE } else { EPS_INSIDE },
        |_, _| 0.0,
        |_, _| 0.0,
        |_, _| 1.0,
        DirichletSpec::everywhere(circle_exact),
    );
    let hmin = |level: i32| 2f64.sqrt() * 2f64.powi(-level);
    BenchmarkCase {
        name: "test2_circle".into(),
        coefficients,
        exact: Some(ExactSolution::new(circle_exact, grad)),
        initial_mesh: InitialMesh { brick: (1, 1), domain: Rect::unit(), level: 3 },
        defaults: CaseDefaults { tol: 1e-10, i_max: 10, min_level: 0, max_level: 10, max_step: 1, n_coarsen: 0, n_ref_auto: None },
        reference_targets: vec![
            ReferenceTarget::new("center_value", 0.10953125, 1e-12, "region S value at the centre"),
            ReferenceTarget::new("dofs_at_hmin_0.0110485", 14245.0, 0.4 * 14245.0, "table row 11"),
            ReferenceTarget::new("error_at_hmin_0.0110485", 3.05214e-5, 1e-4 - 3.05214e-5, "table row 11"),
            ReferenceTarget::new("hmin_row_11", 0.0110485, 1e-6, "table row 11"),
            ReferenceTarget::new("hmin_row_14", 0.00138107, 1e-8, "table row 14"),
            ReferenceTarget::new("hmin_level_7_exact", hmin(7), 0.0, "2^-7 sqrt 2"),
        ],
    }
}

/// Advection-dominated problem with an interior layer at angle `theta`.
pub fn test3(theta: f64) -> BenchmarkCase {
    let eps = 1e-6;
    let (c, s) = (theta.cos(), theta.sin());
    let g = |x: f64, y: f64| {
        let inflow_left = x.abs() < SIDE_TOL && y > 0.0 && y <= 0.2 + SIDE_TOL;
        if inflow_left || y.abs() < SIDE_TOL {
            1.0
        } else {
            0.0
        }
    };
    let coefficients = AdrCoefficients::new(
        move |_, _| eps,
        move |x, y| (x * c + y * s) / eps,
        |_, _| 0.0,
        |_, _| 0.0,
        DirichletSpec::everywhere(g),
    );
    BenchmarkCase {
        name: "test3".into(),
        coefficients,
        exact: None,
        initial_mesh: InitialMesh { brick: (1, 1), domain: Rect::unit(), level: 2 },
        defaults: CaseDefaults { tol: 1e-6, i_max: 10, min_level: 0, max_level: 11, max_step: 3, n_coarsen: 1, n_ref_auto: Some(3) },
        reference_targets: vec![
            ReferenceTarget::new("metric_final_dofs", 150233.0, f64::INFINITY, "metric final mesh"),
            ReferenceTarget::new("marking_final_dofs", 1371972.0, f64::INFINITY, "marking final mesh"),
        ],
    }
}

/// Region file: piecewise-constant `eps`, `b`, `f` over rectangles and circles.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionFile {
    name: Option<String>,
    domain: Option<[f64; 4]>,
    brick: Option<[u32; 2]>,
    level: Option<u8>,
    tol: Option<f64>,
    i_max: Option<usize>,
    min_level: Option<u8>,
    max_level: Option<u8>,
    max_step: Option<u32>,
    n_coarsen: Option<u32>,
    n_ref_auto: Option<u32>,
    background: Values,
    #[serde(default)]
    region: Vec<RegionSpec>,
    #[serde(default)]
    dirichlet: Vec<DirichletSide>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Values {
    epsilon: Option<f64>,
    b: Option<f64>,
    f: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionSpec {
    rect: Option<[f64; 4]>,
    center: Option<[f64; 2]>,
    radius: Option<f64>,
    epsilon: Option<f64>,
    b: Option<f64>,
    f: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirichletSide {
    side: String,
    value: f64,
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Rect([f64; 4]),
    Circle([f64; 2], f64),
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect([x0, y0, x1, y1]) => x >= x0 && x <= x1 && y >= y0 && y <= y1,
            Shape::Circle([cx, cy], r) => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Side {
    Left,
    Right,
    Bottom,
    Top,
    All,
}

impl Side {
    fn parse(s: &str) -> Option<Side> {
        Some(match s {
            "left" => Side::Left,
            "right" => Side::Right,
            "bottom" => Side::Bottom,
            "top" => Side::Top,
            "all" => Side::All,
            _ => return None,
        })
    }

    fn holds(self, x: f64, y: f64, d: &Rect) -> bool {
        match self {
            Side::Left => (x - d.x_min).abs() < SIDE_TOL,
            Side::Right => (x - d.x_max).abs() < SIDE_TOL,
            Side::Bottom => (y - d.y_min).abs() < SIDE_TOL,
            Side::Top => (y - d.y_max).abs() < SIDE_TOL,
            Side::All => on_side(x, y, d),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parse a region file. Later regions override earlier ones; unlisted sides are natural.
pub fn from_region_str(text: &str) -> Result<BenchmarkCase> {
    let file: RegionFile = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        msg: e.message().to_string(),
    })?;
    let bad = |msg: String| Error::InvalidProblem(msg);
    let domain = match file.domain {
        Some([a, b, c, d]) => Rect::new(a, b, c, d)?,
        None => Rect::unit(),
    };
    let bg = file.background;
    let base = [
        bg.epsilon.ok_or_else(|| bad("background.epsilon is required".into()))?,
        bg.b.unwrap_or(0.0),
        bg.f.unwrap_or(0.0),
    ];
    let mut regions: Vec<(Shape, [Option<f64>; 3])> = Vec::new();
    for (n, r) in file.region.iter().enumerate() {
        let shape = match (r.rect, r.center, r.radius) {
            (Some(rect), None, None) if rect[0] < rect[2] && rect[1] < rect[3] => Shape::Rect(rect),
            (None, Some(c), Some(rad)) if rad > 0.0 => Shape::Circle(c, rad),
            _ => {
                return Err(bad(format!(
                    "region {}: give either rect = [x0, y0, x1, y1] or center and a positive radius",
                    n + 1
                )))
            }
        };
        regions.push((shape, [r.epsilon, r.b, r.f]));
    }
    let mut sides = Vec::new();
    for d in &file.dirichlet {
        let side = Side::parse(&d.side).ok_or_else(|| {
            bad(format!("unknown side '{}' (left, right, bottom, top, all)", d.side))
        })?;
        sides.push((side, d.value));
    }
    let regions = Arc::new(regions);
    let field = move |k: usize| {
        let regions = Arc::clone(&regions);
        move |x: f64, y: f64| {
            regions
                .iter()
                .rev()
                .find_map(|(s, v)| if s.contains(x, y) { v[k] } else { None })
                .unwrap_or(base[k])
        }
    };
    let sides = Arc::new(sides);
    let s2 = Arc::clone(&sides);
    let dirichlet = DirichletSpec::new(
        move |x, y| sides.iter().any(|(s, _)| s.holds(x, y, &domain)),
        move |x, y| s2.iter().find(|(s, _)| s.holds(x, y, &domain)).map_or(0.0, |(_, v)| *v),
    );
    let coefficients = AdrCoefficients::new(field(0), |_, _| 0.0, field(1), field(2), dirichlet);
    let brick = file.brick.unwrap_or([1, 1]);
    let case = BenchmarkCase {
        name: file.name.unwrap_or_else(|| "custom".into()),
        coefficients,
        exact: None,
        initial_mesh: InitialMesh { brick: (brick[0], brick[1]), domain, level: file.level.unwrap_or(2) },
        defaults: CaseDefaults {
            tol: file.tol.unwrap_or(1e-4),
            i_max: file.i_max.unwrap_or(10),
            min_level: file.min_level.unwrap_or(0),
            max_level: file.max_level.unwrap_or(DEFAULT_MAX_LEVEL),
            max_step: file.max_step.unwrap_or(0),
            n_coarsen: file.n_coarsen.unwrap_or(0),
            n_ref_auto: file.n_ref_auto,
        },
        reference_targets: Vec::new(),
    };
    case.validate()?;
    Ok(case)
}

pub fn from_region_file(path: impl AsRef<Path>) -> Result<BenchmarkCase> {
    from_region_str(&std::fs::read_to_string(path)?)
}

impl BenchmarkCase {
    /// Sample the coefficients on a grid and check the loop defaults.
    pub fn validate(&self) -> Result<()> {
        let d = &self.defaults;
        if !(d.tol > 0.0) {
            return Err(Error::InvalidProblem(format!("tol must be positive, got {}", d.tol)));
        }
        if d.min_level > d.max_level || self.initial_mesh.level > d.max_level {
            return Err(Error::InvalidProblem(format!(
                "levels out of order: min {}, initial {}, max {}",
                d.min_level, self.initial_mesh.level, d.max_level
            )));
        }
        let r = self.initial_mesh.domain;
        r.validate()?;
        if self.initial_mesh.brick.0 == 0 || self.initial_mesh.brick.1 == 0 {
            return Err(Error::InvalidProblem("brick dimensions must be positive".into()));
        }
        let c = &self.coefficients;
        let n = 16;
        for a in 0..=n {
            for b in 0..=n {
                let x = r.x_min + r.width() * a as f64 / n as f64;
                let y = r.y_min + r.height() * b as f64 / n as f64;
                let eps = (c.epsilon)(x, y);
                if !(eps > 0.0) || !eps.is_finite() {
                    return Err(Error::InvalidCoefficient(format!("epsilon({x}, {y}) = {eps}")));
                }
                let rb = (c.b)(x, y);
                if !(rb >= 0.0) || !rb.is_finite() {
                    return Err(Error::InvalidCoefficient(format!("b({x}, {y}) = {rb}")));
                }
                if !(c.f)(x, y).is_finite() {
                    return Err(Error::InvalidCoefficient(format!("f({x}, {y}) is not finite")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::bernoulli;
    use rand::{Rng, SeedableRng};

    /// Laplacian from central differences of the exact gradient, Richardson-extrapolated.
    fn laplacian(grad: &GradientField, x: f64, y: f64, h: f64) -> f64 {
        let d = |h: f64| {
            let gx = (grad(x + h, y)[0] - grad(x - h, y)[0]) / (2.0 * h);
            let gy = (grad(x, y + h)[1] - grad(x, y - h)[1]) / (2.0 * h);
            gx + gy
        };
        (4.0 * d(h / 2.0) - d(h)) / 3.0
    }

    /// Interior residual of `-eps lap u + b u - f` for cases without advection.
    fn residual(case: &BenchmarkCase, x: f64, y: f64, h: f64) -> f64 {
        let c = &case.coefficients;
        let ex = case.exact.as_ref().unwrap();
        -(c.epsilon)(x, y) * laplacian(&ex.grad, x, y, h) + (c.b)(x, y) * (ex.u)(x, y) - (c.f)(x, y)
    }

    fn check_residual(case: &BenchmarkCase, h: f64, away: impl Fn(f64, f64) -> f64) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut n = 0;
        while n < 200 {
            let x: f64 = rng.random_range(0.001..0.999);
            let y: f64 = rng.random_range(0.001..0.999);
            if away(x, y) <= 1e-6 + 2.0 * h {
                continue;
            }
            let f = (case.coefficients.f)(x, y);
            let r = residual(case, x, y, h);
            assert!(r.abs() <= 1e-7 * f.abs().max(1.0), "{} at ({x}, {y}): residual {r}", case.name);
            n += 1;
        }
    }

    fn check_dirichlet(case: &BenchmarkCase) {
        let ex = case.exact.as_ref().unwrap();
        let d = &case.coefficients.dirichlet;
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            for (x, y) in [(t, 0.0), (t, 1.0), (0.0, t), (1.0, t)] {
                if (d.on_boundary)(x, y) {
                    assert!(((d.g)(x, y) - (ex.u)(x, y)).abs() <= 1e-10, "{} at ({x}, {y})", case.name);
                }
            }
        }
    }

    #[test]
    fn test1_values_and_residual() {
        let c = test1();
        let u = &c.exact.as_ref().unwrap().u;
        assert_eq!(u(0.0, 0.0), 1.0);
        for k in 0..=10 {
            let y = k as f64 / 10.0;
            assert!(u(1.0, y).abs() < 1e-15);
        }
        let a = 100.0f64;
        let direct = (1.0 - (0.5 * a).sinh() / a.sinh()).powi(2);
        assert!((u(0.5, 0.5) - direct).abs() < 1e-14);
        check_residual(&c, 1e-5, |_, _| 1.0);
        check_dirichlet(&c);
    }

    #[test]
    fn sinh_ratio_matches_direct_formula_for_moderate_arguments() {
        for a in [0.5, 3.0, 40.0] {
            for k in 0..=8 {
                let x = k as f64 / 8.0;
                let (s, c) = sinh_ratios(a, x);
                assert!((s - (a * x).sinh() / a.sinh()).abs() < 1e-14);
                assert!((c - (a * x).cosh() / a.sinh()).abs() < 1e-13 * c.max(1.0));
            }
        }
        // sinh(1e4) overflows, the ratio does not.
        let (s, c) = sinh_ratios(1e4, 0.9999);
        assert!((s - (-1.0f64).exp()).abs() < 1e-12 && c.is_finite());
    }

    #[test]
    fn test2_rect_transcription() {
        let c = test2_rect();
        let ex = c.exact.as_ref().unwrap();
        let (c1, c2) = test2_rect_constants();
        for k in 0..=10 {
            let x = k as f64 / 10.0;
            assert_eq!((ex.u)(x, 0.0), 1.0);
            assert!((ex.u)(x, 1.0).abs() < 1e-15);
        }
        let s = TEST2_EPS1.sqrt();
        let below = 1.0 + 2.0 * c1 * (0.5 / s).sinh();
        let above = -0.5 * (0.5 - 1.0) * (0.5 + 2.0 * c2);
        assert!((below - above).abs() < 1e-9);
        let flux_below = TEST2_EPS1 * 2.0 * c1 * (0.5 / s).cosh() / s;
        let flux_above = TEST2_EPS2 * -0.5 * (2.0 * 0.5 + 2.0 * c2 - 1.0);
        assert!((flux_below - flux_above).abs() < 1e-9);
        check_residual(&c, 1e-5, |_, y| (y - 0.5).abs());
        check_dirichlet(&c);
    }

    #[test]
    fn test2_circle_transcription() {
        let c = test2_circle();
        assert!((circle_exact(0.5, 0.5) - 0.10953125).abs() < 1e-15);
        let expected = 0.125 - CIRCLE_RADIUS.powi(2) / 4.0 * (1.0 - 1.0 / EPS_INSIDE);
        assert!((circle_exact(0.5, 0.5) - expected).abs() < 1e-15);
        // Radial flux at r = R from both closed forms.
        let r = CIRCLE_RADIUS;
        let outer = EPS_OUTSIDE * (-2.0 * r / (4.0 * EPS_OUTSIDE));
        let inner = EPS_INSIDE * (-2.0 * r / (4.0 * EPS_INSIDE));
        assert!((outer - inner).abs() < 1e-12);
        let jump = circle_exact(0.5 + r, 0.5) - (0.125 - r * r / (4.0 * EPS_INSIDE) - r * r / 4.0 * (1.0 - 1.0 / EPS_INSIDE));
        assert!(jump.abs() < 1e-15);
        check_residual(&c, 1e-4, |x, y| (((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt() - r).abs());
        check_dirichlet(&c);
    }

    #[test]
    fn test3_data() {
        let theta = FRAC_PI_4;
        let c = test3(theta);
        let psi = &c.coefficients.psi;
        assert!((psi(1.0, 0.0) - psi(0.0, 0.0) - theta.cos() / 1e-6).abs() < 1e-6);
        let g = &c.coefficients.dirichlet.g;
        assert_eq!(g(0.0, 0.1), 1.0);
        assert_eq!(g(0.0, 0.5), 0.0);
        assert_eq!(g(0.0, 0.2), 1.0);
        assert_eq!(g(0.7, 0.0), 1.0);
        assert_eq!(g(1.0, 0.5), 0.0);
        assert_eq!(g(0.5, 1.0), 0.0);
        let arg = psi(0.25, 0.0) - psi(0.0, 0.0);
        assert!((arg - 0.25 * theta.cos() / 1e-6).abs() < 1e-6 && arg > 1.7e5);
        let (bp, bm) = (bernoulli(arg), bernoulli(-arg));
        assert!(bp.is_finite() && bm.is_finite());
        assert_eq!(bp, 0.0);
        assert!((bm - arg).abs() < 1e-9 * arg);
        assert!(c.exact.is_none());
    }

    #[test]
    fn by_name_covers_all_cases() {
        for n in CASE_NAMES {
            let c = by_name(n).unwrap();
            assert_eq!(c.name, n);
            c.validate().unwrap();
            c.initial_mesh.build().unwrap();
        }
        assert!(matches!(by_name("test4"), Err(Error::InvalidArgument(_))));
        assert_eq!(test1().initial_mesh.build().unwrap().len(), 16);
        assert_eq!(test2_rect().initial_mesh.build().unwrap().len(), 32);
        assert_eq!(test2_circle().initial_mesh.build().unwrap().len(), 64);
    }

    const REGION: &str = r#"
name = "inclusion"
brick = [2, 1]
domain = [0.0, 0.0, 2.0, 1.0]
level = 1

[background]
epsilon = 1.0
f = 1.0

[[region]]
rect = [0.5, 0.25, 1.0, 0.75]
epsilon = 10.0

[[region]]
center = [1.5, 0.5]
radius = 0.2
b = 2.0
f = 0.0

[[dirichlet]]
side = "left"
value = 1.0

[[dirichlet]]
side = "right"
value = 0.0
"#;

    #[test]
    fn region_file_fields() {
        let c = from_region_str(REGION).unwrap();
        let k = &c.coefficients;
        assert_eq!(c.name, "inclusion");
        assert_eq!((k.epsilon)(0.7, 0.5), 10.0);
        assert_eq!((k.epsilon)(0.2, 0.5), 1.0);
        assert_eq!((k.b)(1.5, 0.5), 2.0);
        assert_eq!((k.f)(1.5, 0.5), 0.0);
        assert_eq!((k.f)(1.9, 0.9), 1.0);
        let d = &k.dirichlet;
        assert!((d.on_boundary)(0.0, 0.3) && (d.on_boundary)(2.0, 0.3));
        assert!(!(d.on_boundary)(1.0, 0.0));
        assert_eq!((d.g)(0.0, 0.3), 1.0);
        assert_eq!((d.g)(2.0, 0.3), 0.0);
        assert_eq!(c.initial_mesh.build().unwrap().len(), 8);
    }

    #[test]
    fn region_file_errors_are_line_anchored() {
        let err = from_region_str("[background]\nepsilon = 1.0\nepsilom = 2.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = from_region_str("[background]\nepsilon = -1.0\n").unwrap_err();
        assert!(matches!(err, Error::InvalidCoefficient(_)), "{err}");
        let err = from_region_str("[background]\nepsilon = 1.0\n[[region]]\nradius = 1.0\n").unwrap_err();
        assert!(matches!(err, Error::InvalidProblem(_)), "{err}");
        let err = from_region_str("[background]\nepsilon = 1.0\n[[dirichlet]]\nside = \"north\"\nvalue = 0.0\n")
            .unwrap_err();
        assert!(matches!(err, Error::InvalidProblem(_)), "{err}");
    }
}
