//! Recovery-based error estimator, exact error norms and the gradient indicator.

use crate::forest::MeshView;
use crate::quadrature::cell_points;
use crate::recovery::{RecoveredGradient, RecoveredSolution};
use crate::space::{bilinear_shape, corner_values, DofMap, NodalField};
use crate::{Error, Result};
use rayon::prelude::*;
use std::path::Path;

/// Per-leaf estimator `eta_k = |u* - u_h|` in `L2(K)` and the global root-sum-square.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorEstimate {
    pub eta_k: Vec<f64>,
    pub eta: f64,
}

impl ErrorEstimate {
    pub fn from_local(eta_k: Vec<f64>) -> ErrorEstimate {
        let eta = eta_k.iter().map(|e| e * e).sum::<f64>().sqrt();
        ErrorEstimate { eta_k, eta }
    }

    pub fn n_el(&self) -> usize {
        self.eta_k.len()
    }

    /// CSV with columns `leaf,level,eta_k`.
    pub fn write_csv(&self, path: impl AsRef<Path>, mesh: &MeshView) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["leaf", "level", "eta_k"])?;
        for (k, e) in self.eta_k.iter().enumerate() {
            w.write_record(&[k.to_string(), mesh.leaves[k].level.to_string(), e.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn bilinear(c: &[f64; 4], s: f64, t: f64) -> f64 {
    let n = bilinear_shape(s, t);
    n[0] * c[0] + n[1] * c[1] + n[2] * c[2] + n[3] * c[3]
}

/// `eta_k` with a 3x3 Gauss rule, exact for the biquartic integrand.
pub fn estimate(u: &NodalField, w: &RecoveredSolution, mesh: &MeshView, dofmap: &DofMap) -> ErrorEstimate {
    let eta_k = (0..mesh.n_leaves() as u32)
        .into_par_iter()
        .map(|k| {
            let c = corner_values(&u.values, mesh, dofmap, k);
            cell_points(&mesh.leaves[k as usize], 3)
                .iter()
                .map(|([s, t], _, wt)| {
                    let d = w.eval_local(k, *s, *t) - bilinear(&c, *s, *t);
                    wt * d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    ErrorEstimate::from_local(eta_k)
}

/// `sqrt(sum_k int_K f_k(s, t, x, y))` for a per-leaf squared-error integrand.
fn integrate_sq(mesh: &MeshView, order: usize, f: impl Fn(u32, f64, f64, f64, f64) -> f64 + Sync) -> f64 {
    let parts: Vec<f64> = (0..mesh.n_leaves() as u32)
        .into_par_iter()
        .map(|k| {
            cell_points(&mesh.leaves[k as usize], order)
                .iter()
                .map(|([s, t], [x, y], wt)| wt * f(k, *s, *t, *x, *y))
                .sum::<f64>()
        })
        .collect();
    parts.iter().sum::<f64>().sqrt()
}

/// `|u_h - exact|` in `L2`.
pub fn l2_error_nodal(
    u: &NodalField,
    mesh: &MeshView,
    dofmap: &DofMap,
    exact: &(dyn Fn(f64, f64) -> f64 + Sync),
    order: usize,
) -> f64 {
    integrate_sq(mesh, order, |k, s, t, x, y| {
        let c = corner_values(&u.values, mesh, dofmap, k);
        let d = bilinear(&c, s, t) - exact(x, y);
        d * d
    })
}

/// `|u* - exact|` in `L2`.
pub fn l2_error_recovered(
    w: &RecoveredSolution,
    mesh: &MeshView,
    exact: &(dyn Fn(f64, f64) -> f64 + Sync),
    order: usize,
) -> f64 {
    integrate_sq(mesh, order, |k, s, t, x, y| {
        let d = w.eval_local(k, s, t) - exact(x, y);
        d * d
    })
}

/// Gradient of the bilinear field on leaf `k` at local `(s, t)`.
fn grad_bilinear(c: &[f64; 4], hx: f64, hy: f64, s: f64, t: f64) -> [f64; 2] {
    [
        ((c[1] - c[0]) * (1.0 - t) + (c[3] - c[2]) * t) / hx,
        ((c[2] - c[0]) * (1.0 - s) + (c[3] - c[1]) * s) / hy,
    ]
}

/// `|grad u_h - grad exact|` in `L2`.
pub fn l2_error_gradient(
    u: &NodalField,
    mesh: &MeshView,
    dofmap: &DofMap,
    exact_grad: &(dyn Fn(f64, f64) -> [f64; 2] + Sync),
    order: usize,
) -> f64 {
    integrate_sq(mesh, order, |k, s, t, x, y| {
        let c = corner_values(&u.values, mesh, dofmap, k);
        let cell = &mesh.leaves[k as usize];
        let g = grad_bilinear(&c, cell.extent[0], cell.extent[1], s, t);
        let e = exact_grad(x, y);
        (g[0] - e[0]).powi(2) + (g[1] - e[1]).powi(2)
    })
}

/// `|sigma* - grad exact|` in `L2`.
pub fn l2_error_recovered_gradient(
    sigma: &RecoveredGradient,
    mesh: &MeshView,
    exact_grad: &(dyn Fn(f64, f64) -> [f64; 2] + Sync),
    order: usize,
) -> f64 {
    integrate_sq(mesh, order, |k, s, t, x, y| {
        let g = sigma.at_local(mesh, k, s, t);
        let e = exact_grad(x, y);
        (g[0] - e[0]).powi(2) + (g[1] - e[1]).powi(2)
    })
}

/// Exact-error norms of the discrete and recovered quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub u_h: f64,
    pub u_star: f64,
    pub grad_u_h: f64,
    pub sigma: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn exact_errors(
    u: &NodalField,
    sigma: &RecoveredGradient,
    w: &RecoveredSolution,
    mesh: &MeshView,
    dofmap: &DofMap,
    exact: &(dyn Fn(f64, f64) -> f64 + Sync),
    exact_grad: &(dyn Fn(f64, f64) -> [f64; 2] + Sync),
    order: usize,
) -> ErrorNorms {
    ErrorNorms {
        u_h: l2_error_nodal(u, mesh, dofmap, exact, order),
        u_star: l2_error_recovered(w, mesh, exact, order),
        grad_u_h: l2_error_gradient(u, mesh, dofmap, exact_grad, order),
        sigma: l2_error_recovered_gradient(sigma, mesh, exact_grad, order),
    }
}

/// Effectivity index `eta / |u - u_h|`.
pub fn effectivity(eta: f64, exact_err: f64) -> Result<f64> {
    if exact_err == 0.0 {
        return Err(Error::UndefinedEffectivity);
    }
    Ok(eta / exact_err)
}

/// Area-averaged gradient norm `|grad u_h|_{L2(K)} / |K|` per leaf (2x2 Gauss).
pub fn gradient_indicator(u: &NodalField, mesh: &MeshView, dofmap: &DofMap) -> Vec<f64> {
    (0..mesh.n_leaves() as u32)
        .into_par_iter()
        .map(|k| {
            let c = corner_values(&u.values, mesh, dofmap, k);
            let cell = &mesh.leaves[k as usize];
            let sq: f64 = cell_points(cell, 2)
                .iter()
                .map(|([s, t], _, wt)| {
                    let g = grad_bilinear(&c, cell.extent[0], cell.extent[1], *s, *t);
                    wt * (g[0] * g[0] + g[1] * g[1])
                })
                .sum();
            sq.sqrt() / cell.area()
        })
        .collect()
}

/// Leaves to refine (`gamma_k >= c1 * mean`) and to coarsen (`gamma_k <= c2 * mean`).
pub fn mark_by_indicator(gamma: &[f64], c1: f64, c2: f64) -> (Vec<u32>, Vec<u32>) {
    let mean = gamma.iter().sum::<f64>() / gamma.len().max(1) as f64;
    let mut refine = Vec::new();
    let mut coarsen = Vec::new();
    for (k, &g) in gamma.iter().enumerate() {
        if g >= c1 * mean {
            refine.push(k as u32);
        } else if g <= c2 * mean {
            coarsen.push(k as u32);
        }
    }
    (refine, coarsen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{Forest, Rect};
    use crate::recovery::recover;
    use crate::space::DirichletSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn uniform(level: u8) -> (MeshView, DofMap) {
        let m = Forest::new_brick(1, 1, Rect::unit(), level).unwrap().extract_mesh(None).unwrap();
        let d = DofMap::build(&m, &DirichletSpec::none()).unwrap();
        (m, d)
    }

    fn midpoint_sq(f: impl Fn(f64, f64) -> f64, x0: f64, y0: f64, hx: f64, hy: f64, n: usize) -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                let x = x0 + (i as f64 + 0.5) * hx / n as f64;
                let y = y0 + (j as f64 + 0.5) * hy / n as f64;
                s += f(x, y).powi(2);
            }
        }
        s * hx * hy / (n * n) as f64
    }

    /// Romberg extrapolation of midpoint sums on `n, 2n, 4n, ...` grids.
    ///
    /// The integrands are polynomials of degree four per direction, so the
    /// midpoint error expansion terminates and a few levels reach round-off.
    fn romberg_sq(f: impl Fn(f64, f64) -> f64 + Copy, x0: f64, y0: f64, hx: f64, hy: f64, n: usize, levels: usize) -> f64 {
        let mut r: Vec<f64> = (0..levels).map(|k| midpoint_sq(f, x0, y0, hx, hy, n << k)).collect();
        for m in 1..levels {
            let f4 = 4f64.powi(m as i32);
            r = r.windows(2).map(|w| (f4 * w[1] - w[0]) / (f4 - 1.0)).collect();
        }
        r[0]
    }

    #[test]
    fn bilinear_field_has_zero_estimate() {
        let (m, d) = uniform(2);
        let u = NodalField::interpolate(|x, y| 1.0 + 2.0 * x - y + 3.0 * x * y, &m, &d);
        let (_, w) = recover(&u, &m, &d);
        assert!(estimate(&u, &w, &m, &d).eta < 1e-13);
    }

    #[test]
    fn centroid_bubble_against_midpoint_oracle() {
        let (m, d) = uniform(0);
        let u = NodalField::zeros(&d);
        let mut vals = [0.0; 9];
        vals[8] = 1.0;
        let w = RecoveredSolution { values: vec![vals] };
        let eta = estimate(&u, &w, &m, &d).eta_k[0];
        let bubble = |x: f64, y: f64| 16.0 * x * (1.0 - x) * y * (1.0 - y);
        let oracle = romberg_sq(bubble, 0.0, 0.0, 1.0, 1.0, 20, 4).sqrt();
        assert!((eta - 16.0 / 30.0).abs() < 1e-14);
        assert!((eta - oracle).abs() < 1e-10);
    }

    #[test]
    fn pythagorean_sum() {
        let e = ErrorEstimate::from_local(vec![3e-4, 4e-4]);
        assert!((e.eta - 5e-4).abs() < 1e-18);
    }

    #[test]
    fn exact_error_examples() {
        let (m, d) = uniform(1);
        let u = NodalField::interpolate(|x, y| x * y, &m, &d);
        assert!(l2_error_nodal(&u, &m, &d, &|x, y| x * y, 5) < 1e-14);
        let z = NodalField::zeros(&d);
        assert!((l2_error_nodal(&z, &m, &d, &|_, _| 1.0, 5) - 1.0).abs() < 1e-14);
        let (m, d) = uniform(2);
        let u = NodalField::interpolate(|x, _| x * x, &m, &d);
        let err = l2_error_nodal(&u, &m, &d, &|x, _| x * x, 5);
        let mut sq = 0.0;
        for c in &m.leaves {
            let x0 = c.anchor[0];
            let h = c.extent[0];
            let lin = move |x: f64, _: f64| x0 * x0 + (2.0 * x0 + h) * (x - x0) - x * x;
            sq += midpoint_sq(lin, c.anchor[0], c.anchor[1], c.extent[0], c.extent[1], 100);
        }
        assert!((err - sq.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn effectivity_examples() {
        assert_eq!(effectivity(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(effectivity(0.9, 1.0).unwrap(), 0.9);
        assert!(matches!(effectivity(1.0, 0.0), Err(Error::UndefinedEffectivity)));
    }

    #[test]
    fn gradient_indicator_examples() {
        let (m, d) = uniform(0);
        assert_eq!(gradient_indicator(&NodalField::interpolate(|_, _| 4.0, &m, &d), &m, &d), vec![0.0]);
        assert!((gradient_indicator(&NodalField::interpolate(|x, _| x, &m, &d), &m, &d)[0] - 1.0).abs() < 1e-14);
        let (m, d) = uniform(1);
        let g = gradient_indicator(&NodalField::interpolate(|x, _| x, &m, &d), &m, &d);
        assert!(g.iter().all(|v| (v - 2.0).abs() < 1e-13));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn gauss_matches_midpoint_oracle(seed in 0u64..10_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (m, d) = uniform(1);
            let u = NodalField::new((0..d.n_dofs).map(|_| rng.random_range(-1.0..1.0)).collect());
            let w = RecoveredSolution {
                values: (0..m.n_leaves()).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect(),
            };
            let est = estimate(&u, &w, &m, &d);
            for (k, c) in m.leaves.iter().enumerate() {
                let cv = corner_values(&u.values, &m, &d, k as u32);
                let diff = |x: f64, y: f64| {
                    let s = (x - c.anchor[0]) / c.extent[0];
                    let t = (y - c.anchor[1]) / c.extent[1];
                    w.eval_local(k as u32, s, t) - bilinear(&cv, s, t)
                };
                let oracle = romberg_sq(diff, c.anchor[0], c.anchor[1], c.extent[0], c.extent[1], 50, 3);
                let gauss = est.eta_k[k] * est.eta_k[k];
                prop_assert!((gauss - oracle).abs() <= 1e-9 * gauss);
            }
        }

        #[test]
        fn scale_equivariance(lambda in -5.0f64..5.0) {
            let (m, d) = uniform(2);
            let u = NodalField::interpolate(|x, y| (4.0 * x).sin() * y, &m, &d);
            let (_, w) = recover(&u, &m, &d);
            let base = estimate(&u, &w, &m, &d).eta;
            let us = NodalField::new(u.values.iter().map(|v| v * lambda).collect());
            let ws = RecoveredSolution { values: w.values.iter().map(|a| a.map(|v| v * lambda)).collect() };
            let scaled = estimate(&us, &ws, &m, &d).eta;
            prop_assert!((scaled - lambda.abs() * base).abs() <= 1e-12 * base.max(1e-300) * lambda.abs().max(1.0));
        }

        #[test]
        fn indicator_marking_scale_invariant(lambda in 0.01f64..100.0, neg in proptest::bool::ANY) {
            let lambda = if neg { -lambda } else { lambda };
            let (m, d) = uniform(3);
            let u = NodalField::interpolate(|x, y| (5.0 * x * y).exp(), &m, &d);
            let us = NodalField::new(u.values.iter().map(|v| v * lambda).collect());
            let a = mark_by_indicator(&gradient_indicator(&u, &m, &d), 1.5, 0.5);
            let b = mark_by_indicator(&gradient_indicator(&us, &m, &d), 1.5, 0.5);
            prop_assert_eq!(a, b);
        }
    }
}
