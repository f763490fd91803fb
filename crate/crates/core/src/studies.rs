//! Uniform-refinement sweeps, dof/error curves and strategy comparisons.

use crate::adaptivity::{drive, AdaptConfig, AdaptReport, DriveFailure, Strategy};
use crate::assembly::assemble;
use crate::cases::BenchmarkCase;
use crate::estimator::{exact_errors, ErrorNorms};
use crate::forest::{Forest, MeshView};
use crate::linalg::{solve, SolveOptions, SolveReport};
use crate::recovery::recover;
use crate::space::{DofMap, NodalField};
use crate::{Error, Result};
use std::path::Path;

const ERROR_ORDER: usize = 5;

/// Discrete solution on a fixed mesh.
pub struct Snapshot {
    pub mesh: MeshView,
    pub dofmap: DofMap,
    pub u: NodalField,
    pub solver: SolveReport,
}

/// Assemble and solve `case` on `forest`; non-convergence is a [`Error::SolverFailure`].
pub fn solve_on(case: &BenchmarkCase, forest: &Forest, solver: &SolveOptions) -> Result<Snapshot> {
    let mesh = forest.extract_mesh(None)?;
    let dofmap = DofMap::build(&mesh, &case.coefficients.dirichlet)?;
    let system = assemble(&mesh, &dofmap, &case.coefficients)?;
    let (x, report) = solve(&system.matrix, &system.rhs, None, solver)?;
    if !report.converged {
        return Err(Error::SolverFailure(format!(
            "{:?} stalled at relative residual {:.3e} on {} unknowns",
            report.method,
            report.residual,
            system.rhs.len()
        )));
    }
    let u = system.expand_solution(&x, &dofmap);
    Ok(Snapshot { mesh, dofmap, u, solver: report })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub level: u8,
    pub n_el: usize,
    pub dofs: usize,
    pub h_min: f64,
    pub errors: ErrorNorms,
}

/// Exact errors on a sequence of uniform meshes.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudy {
    pub case: String,
    pub rows: Vec<SweepRow>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("slope needs two positive points".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope needs distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

impl ConvergenceStudy {
    /// Slopes against `h_min` of `[u_h, u*, grad u_h, sigma*]` over the last `tail` rows.
    pub fn slopes(&self, tail: usize) -> Result<[f64; 4]> {
        let rows = &self.rows[self.rows.len().saturating_sub(tail)..];
        let get = |f: fn(&ErrorNorms) -> f64| {
            loglog_slope(&rows.iter().map(|r| (r.h_min, f(&r.errors))).collect::<Vec<_>>())
        };
        Ok([get(|e| e.u_h)?, get(|e| e.u_star)?, get(|e| e.grad_u_h)?, get(|e| e.sigma)?])
    }

    pub fn curve(&self) -> DofErrorCurve {
        DofErrorCurve::new(self.rows.iter().map(|r| (r.dofs as f64, r.errors.u_h)).collect())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["level", "n_el", "dofs", "h_min", "err_u_h", "err_u_star", "err_grad_u_h", "err_sigma"])?;
        for r in &self.rows {
            let e = &r.errors;
            w.write_record(&[
                r.level.to_string(),
                r.n_el.to_string(),
                r.dofs.to_string(),
                format!("{:e}", r.h_min),
                format!("{:e}", e.u_h),
                format!("{:e}", e.u_star),
                format!("{:e}", e.grad_u_h),
                format!("{:e}", e.sigma),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solve `case` on uniform refinements of its initial brick at each level.
pub fn uniform_sweep(
    case: &BenchmarkCase,
    levels: impl IntoIterator<Item = u8>,
    solver: &SolveOptions,
) -> Result<ConvergenceStudy> {
    let exact = case
        .exact
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("case '{}' has no exact solution", case.name)))?;
    let init = &case.initial_mesh;
    let mut rows = Vec::new();
    for level in levels {
        let forest = Forest::new_brick(init.brick.0, init.brick.1, init.domain, level)?;
        let s = solve_on(case, &forest, solver)?;
        let (sigma, w) = recover(&s.u, &s.mesh, &s.dofmap);
        let errors = exact_errors(&s.u, &sigma, &w, &s.mesh, &s.dofmap, exact.u.as_ref(), exact.grad.as_ref(), ERROR_ORDER);
        rows.push(SweepRow { level, n_el: s.mesh.n_leaves(), dofs: s.dofmap.n_dofs, h_min: s.mesh.h_min(), errors });
    }
    Ok(ConvergenceStudy { case: case.name.clone(), rows })
}

/// Error as a function of dofs, in the order the points were produced.
#[derive(Clone, Debug, PartialEq)]
pub struct DofErrorCurve {
    pub points: Vec<(f64, f64)>,
}

/// Dofs needed by two curves to reach a common error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedDofs {
    pub error: f64,
    pub adapted: f64,
    pub uniform: f64,
}

impl MatchedDofs {
    pub fn ratio(&self) -> f64 {
        self.adapted / self.uniform
    }
}

impl DofErrorCurve {
    pub fn new(points: Vec<(f64, f64)>) -> DofErrorCurve {
        DofErrorCurve { points }
    }

    /// Points of an adaptive run that carry an exact error.
    pub fn from_report(report: &AdaptReport) -> DofErrorCurve {
        DofErrorCurve::new(report.records.iter().filter_map(|r| r.error.map(|e| (r.dofs as f64, e))).collect())
    }

    pub fn min_error(&self) -> Option<f64> {
        self.points.iter().map(|p| p.1).filter(|e| *e > 0.0).reduce(f64::min)
    }

    /// Dofs at which the curve first drops to `error`, interpolated in log-log.
    pub fn dofs_at(&self, error: f64) -> Option<f64> {
        let first = self.points.first()?;
        if first.1 <= error {
            return Some(first.0);
        }
        for w in self.points.windows(2) {
            let ((d0, e0), (d1, e1)) = (w[0], w[1]);
            if e0 >= error && e1 <= error {
                if e0 == e1 {
                    return Some(d1);
                }
                let t = (error.ln() - e0.ln()) / (e1.ln() - e0.ln());
                return Some((d0.ln() + t * (d1.ln() - d0.ln())).exp());
            }
        }
        None
    }

    /// Compare at the finest error both curves reach.
    pub fn matched(adapted: &DofErrorCurve, uniform: &DofErrorCurve) -> Option<MatchedDofs> {
        let error = adapted.min_error()?.max(uniform.min_error()?);
        Some(MatchedDofs { error, adapted: adapted.dofs_at(error)?, uniform: uniform.dofs_at(error)? })
    }
}

/// Write labelled dof/error curves as one long table.
pub fn write_dof_error_csv(path: impl AsRef<Path>, curves: &[(&str, &DofErrorCurve)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["mesh", "dofs", "error"])?;
    for (label, c) in curves {
        for (d, e) in &c.points {
            w.write_record(&[label.to_string(), format!("{d}"), format!("{e:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Run each strategy from the same configuration.
pub fn compare_strategies(
    case: &BenchmarkCase,
    cfg: &AdaptConfig,
    strategies: &[Strategy],
) -> std::result::Result<Vec<AdaptReport>, Box<DriveFailure>> {
    strategies.iter().map(|&s| drive(case, cfg, s).map(|run| run.report)).collect()
}

/// Side-by-side summary: final cell count, dofs and iterations per strategy.
pub fn write_comparison_csv(path: impl AsRef<Path>, reports: &[AdaptReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["strategy", "iterations", "n_el", "dofs", "h_min", "eta", "error", "stop"])?;
    for r in reports {
        let last = r.last().ok_or_else(|| Error::InvalidArgument("empty report".into()))?;
        w.write_record(&[
            r.strategy.to_string(),
            r.iterations().to_string(),
            last.n_el.to_string(),
            last.dofs.to_string(),
            format!("{:e}", last.h_min),
            format!("{:e}", last.eta),
            last.error.map_or_else(String::new, |e| format!("{e:e}")),
            r.stop.map_or_else(String::new, |s| s.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{test1, test2_circle};

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (1..6).map(|k| (0.5f64.powi(k), 3.0 * 0.5f64.powi(2 * k))).collect();
        assert!((loglog_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_err());
        assert!(loglog_slope(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn dofs_at_interpolates_in_loglog() {
        let c = DofErrorCurve::new(vec![(100.0, 1e-2), (400.0, 1e-3), (1600.0, 1e-4)]);
        assert_eq!(c.dofs_at(1e-1), Some(100.0));
        assert!((c.dofs_at(1e-3).unwrap() - 400.0).abs() < 1e-9);
        assert!((c.dofs_at(10f64.powf(-3.5)).unwrap() - 800.0).abs() < 1e-9);
        assert_eq!(c.dofs_at(1e-5), None);
        assert_eq!(c.min_error(), Some(1e-4));
    }

    #[test]
    fn matched_uses_the_coarser_of_the_finest_errors() {
        let a = DofErrorCurve::new(vec![(10.0, 1e-1), (100.0, 1e-3)]);
        let u = DofErrorCurve::new(vec![(10.0, 1e-1), (1000.0, 1e-2), (10000.0, 1e-4)]);
        let m = DofErrorCurve::matched(&a, &u).unwrap();
        assert_eq!(m.error, 1e-3);
        assert!((m.adapted - 100.0).abs() < 1e-9);
        assert!((m.uniform - 10f64.powf(3.5)).abs() < 1e-6);
        assert!(m.ratio() < 0.1);
    }

    #[test]
    fn circle_sweep_converges_at_second_order() {
        let s = uniform_sweep(&test2_circle(), 3..=6, &SolveOptions::default()).unwrap();
        assert_eq!(s.rows.len(), 4);
        assert_eq!(s.rows[0].n_el, 64);
        assert!(s.rows.windows(2).all(|w| w[1].errors.u_h < w[0].errors.u_h));
        let [u_h, ..] = s.slopes(3).unwrap();
        assert!(u_h > 1.5, "{u_h}");
    }

    #[test]
    fn sweep_requires_exact_solution() {
        let c = crate::cases::test3(std::f64::consts::FRAC_PI_4);
        assert!(matches!(uniform_sweep(&c, [2], &SolveOptions::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn comparison_table_lists_each_strategy() {
        let case = test1();
        let cfg = AdaptConfig { i_max: 2, ..AdaptConfig::for_case(&case) };
        let reports = compare_strategies(&case, &cfg, &[Strategy::Marking, Strategy::Metric]).unwrap();
        let dir = std::env::temp_dir().join(format!("quadrec-cmp-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("compare.csv");
        write_comparison_csv(&path, &reports).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("marking,2,"));
        assert!(lines[2].starts_with("metric,2,"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
