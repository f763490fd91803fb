//! Marking and metric adaptation plans, plan execution and the outer
//! solve, estimate, adapt loop.

use crate::assembly::assemble;
use crate::cases::BenchmarkCase;
use crate::estimator::{effectivity, estimate, gradient_indicator, l2_error_nodal, mark_by_indicator, ErrorEstimate};
use crate::forest::{CellKey, Forest, MeshView};
use crate::linalg::{solve, SolveOptions};
use crate::recovery::{edge_gradients, recover_gradient, recover_solution, RecoveredGradient, RecoveredSolution};
use crate::space::{DofMap, NodalField};
use crate::{Error, Result};
use rustc_hash::FxHashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

/// Quadrature order of the exact-error norms reported per iteration.
const ERROR_ORDER: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Marking,
    Metric,
    GradientIndicator,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Marking, Strategy::Metric, Strategy::GradientIndicator];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Marking => "marking",
            Strategy::Metric => "metric",
            Strategy::GradientIndicator => "gradient_indicator",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy '{s}' (marking, metric, gradient_indicator)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptConfig {
    /// Target for the global estimator.
    pub tol: f64,
    pub i_max: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub n_ref: u32,
    pub n_coarsen: u32,
    /// When set to `s`, `n_ref` is raised per iteration to `max_k l_k - s`,
    /// so the worst leaf refines at most `s` times and the grading below it is kept.
    pub n_ref_auto: Option<u32>,
    /// Bound on `|l_k|` per adaptation; 0 leaves it unbounded.
    pub max_step: u32,
    pub min_level: u8,
    pub max_level: u8,
    /// Stop when `|N_i - N_{i-1}| / N_{i-1}` falls below this.
    pub stop_on_stagnation: Option<f64>,
    /// Refine threshold factor of the gradient indicator.
    pub indicator_c1: f64,
    /// Coarsen threshold factor of the gradient indicator.
    pub indicator_c2: f64,
    /// Morton parts used as owners in gradient recovery.
    pub n_parts: usize,
    pub solver: SolveOptions,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            tol: 1e-4,
            i_max: 10,
            delta1: 1.5,
            delta2: 0.5,
            n_ref: 0,
            n_coarsen: 0,
            n_ref_auto: None,
            max_step: 0,
            min_level: 0,
            max_level: crate::forest::DEFAULT_MAX_LEVEL,
            stop_on_stagnation: None,
            indicator_c1: 1.0,
            indicator_c2: 0.1,
            n_parts: 1,
            solver: SolveOptions::default(),
        }
    }
}

impl AdaptConfig {
    /// Defaults of `case` with the remaining fields at their global defaults.
    pub fn for_case(case: &BenchmarkCase) -> AdaptConfig {
        let d = &case.defaults;
        AdaptConfig {
            tol: d.tol,
            i_max: d.i_max,
            min_level: d.min_level,
            max_level: d.max_level,
            max_step: d.max_step,
            n_coarsen: d.n_coarsen,
            n_ref_auto: d.n_ref_auto,
            ..AdaptConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if !(self.delta2 >= 0.0 && self.delta2 < self.delta1) {
            return bad(format!("need 0 <= delta2 < delta1, got {} and {}", self.delta2, self.delta1));
        }
        if !(self.indicator_c2 >= 0.0 && self.indicator_c2 < self.indicator_c1) {
            return bad(format!(
                "need 0 <= indicator_c2 < indicator_c1, got {} and {}",
                self.indicator_c2, self.indicator_c1
            ));
        }
        if self.min_level > self.max_level {
            return bad(format!("min_level {} exceeds max_level {}", self.min_level, self.max_level));
        }
        if self.n_parts == 0 {
            return bad("n_parts must be positive".into());
        }
        if let Some(s) = self.stop_on_stagnation {
            if !(s >= 0.0) {
                return bad(format!("stagnation threshold must be non-negative, got {s}"));
            }
        }
        Ok(())
    }
}

/// Signed refinement count per leaf, in forest leaf order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdaptPlan {
    pub levels: Vec<i32>,
}

impl AdaptPlan {
    pub fn keep(n: usize) -> AdaptPlan {
        AdaptPlan { levels: vec![0; n] }
    }

    pub fn is_keep(&self) -> bool {
        self.levels.iter().all(|&l| l == 0)
    }

    pub fn n_refine(&self) -> usize {
        self.levels.iter().filter(|&&l| l > 0).count()
    }

    pub fn n_coarsen(&self) -> usize {
        self.levels.iter().filter(|&&l| l < 0).count()
    }
}

fn check_len(n: usize, forest: &Forest) -> Result<()> {
    if n != forest.len() {
        return Err(Error::DimensionMismatch { expected: forest.len(), got: n });
    }
    Ok(())
}

/// Clamp to the level bounds, then drop coarsening outside complete all-negative families.
fn finish_plan(mut levels: Vec<i32>, forest: &Forest, cfg: &AdaptConfig) -> AdaptPlan {
    let (lo, hi) = (cfg.min_level.max(forest.min_level()), cfg.max_level.min(forest.max_level()));
    for (l, c) in levels.iter_mut().zip(forest.leaves()) {
        let lev = c.level as i32;
        *l = (*l).clamp((lo as i32 - lev).min(0), (hi as i32 - lev).max(0));
    }
    apply_family_rule(&mut levels, forest);
    AdaptPlan { levels }
}

/// Zero every negative entry whose sibling family is not four negative leaves.
fn apply_family_rule(levels: &mut [i32], forest: &Forest) {
    let mut ok = vec![false; levels.len()];
    for (n, _) in family_starts(forest) {
        if levels[n..n + 4].iter().all(|&l| l < 0) {
            ok[n..n + 4].iter_mut().for_each(|o| *o = true);
        }
    }
    for (l, o) in levels.iter_mut().zip(ok) {
        if *l < 0 && !o {
            *l = 0;
        }
    }
}

/// First leaf index of each complete family; families are contiguous in Morton order.
fn family_starts(forest: &Forest) -> Vec<(usize, [CellKey; 4])> {
    let leaves = forest.leaves();
    let mut out = Vec::new();
    let mut n = 0;
    while n + 3 < leaves.len() {
        let k = leaves[n].key();
        if k.level > 0 && k.child_index() == 0 {
            let fam = k.family().expect("non-root");
            if (1..4).all(|d| leaves[n + d].key() == fam[d]) {
                out.push((n, fam));
                n += 4;
                continue;
            }
        }
        n += 1;
    }
    out
}

/// One-step marking: refine above `delta1 tol / sqrt(N)`, coarsen below `delta2 tol / sqrt(N)`.
pub fn mark(est: &ErrorEstimate, forest: &Forest, cfg: &AdaptConfig) -> Result<AdaptPlan> {
    check_len(est.n_el(), forest)?;
    let t = cfg.tol / (est.n_el() as f64).sqrt();
    let levels = est
        .eta_k
        .iter()
        .map(|&e| {
            if e >= cfg.delta1 * t {
                1
            } else if e <= cfg.delta2 * t {
                -1
            } else {
                0
            }
        })
        .collect();
    Ok(finish_plan(levels, forest, cfg))
}

/// `ceil(log2(ratio))`, with ratios within 1e-12 of a power of two snapped to it.
///
/// `None` stands for minus infinity (`ratio == 0`).
pub fn ceil_log2(ratio: f64) -> Option<i64> {
    if ratio <= 0.0 {
        return None;
    }
    let l = ratio.log2();
    let r = l.round();
    let v = if (l - r).abs() < 1e-12 { r } else { l.ceil() };
    Some(v.clamp(-1e6, 1e6) as i64)
}

/// Apply the `n_ref` / `n_coarsen` caps and the per-step bound to a raw count.
pub fn cap_steps(raw: Option<i64>, n_ref: i64, cfg: &AdaptConfig) -> i64 {
    let capped = match raw {
        Some(l) if l >= 0 => (l - n_ref).max(0),
        Some(l) => (l + cfg.n_coarsen as i64).min(0),
        None => i64::MIN / 2,
    };
    if cfg.max_step > 0 {
        capped.clamp(-(cfg.max_step as i64), cfg.max_step as i64)
    } else {
        capped
    }
}

/// Metric plan: predicted number of halvings to reach `eta_k = tol / sqrt(N)`.
pub fn metric_plan(est: &ErrorEstimate, forest: &Forest, cfg: &AdaptConfig) -> Result<AdaptPlan> {
    check_len(est.n_el(), forest)?;
    let scale = (est.n_el() as f64).sqrt() / cfg.tol;
    let raw: Vec<Option<i64>> = est.eta_k.iter().map(|&e| ceil_log2(e * scale)).collect();
    let mut n_ref = cfg.n_ref as i64;
    if let Some(s) = cfg.n_ref_auto {
        // Leaves already at the finest allowed level do not set the budget.
        let hi = cfg.max_level.min(forest.max_level()) as i64;
        let top = raw
            .iter()
            .zip(forest.leaves())
            .filter_map(|(l, c)| l.map(|l| l.min(hi - c.level as i64)))
            .max()
            .unwrap_or(0);
        n_ref = n_ref.max(top - s as i64);
    }
    let top = cfg.n_ref_auto.map_or(i64::MAX, |s| s as i64);
    let levels = raw
        .into_iter()
        .map(|l| cap_steps(l, n_ref, cfg).clamp(-(i32::MAX as i64), top.min(i32::MAX as i64)) as i32)
        .collect();
    Ok(finish_plan(levels, forest, cfg))
}

/// Gradient-indicator plan: one step up or down against multiples of the mean indicator.
pub fn indicator_plan(gamma: &[f64], forest: &Forest, cfg: &AdaptConfig) -> Result<AdaptPlan> {
    check_len(gamma.len(), forest)?;
    let (refine, coarsen) = mark_by_indicator(gamma, cfg.indicator_c1, cfg.indicator_c2);
    let mut levels = vec![0; gamma.len()];
    refine.iter().for_each(|&k| levels[k as usize] = 1);
    coarsen.iter().for_each(|&k| levels[k as usize] = -1);
    Ok(finish_plan(levels, forest, cfg))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExecuteReport {
    pub generations: usize,
    pub refined: usize,
    pub coarsened: usize,
    pub balance_splits: usize,
    pub skipped_refinements: usize,
    pub skipped_coarsenings: usize,
}

/// Apply a plan one generation at a time.
///
/// Each generation refines every leaf with a positive count (children inherit
/// count - 1), restores 2:1 balance (new leaves carry 0), then merges complete
/// families whose counts are all negative (the parent inherits max + 1).
/// Coarsenings that would break balance are skipped and dropped.
pub fn execute(plan: &AdaptPlan, forest: &mut Forest) -> Result<ExecuteReport> {
    check_len(plan.levels.len(), forest)?;
    let mut counts: FxHashMap<CellKey, i32> = forest
        .leaves()
        .iter()
        .zip(&plan.levels)
        .filter(|(_, &l)| l != 0)
        .map(|(c, &l)| (c.key(), l))
        .collect();
    let mut report = ExecuteReport::default();
    while !counts.is_empty() {
        let mut progressed = false;
        let refine: Vec<CellKey> = forest
            .leaves()
            .iter()
            .map(|c| c.key())
            .filter(|k| counts.get(k).is_some_and(|&l| l > 0))
            .collect();
        if !refine.is_empty() {
            let r = forest.refine(&refine)?;
            report.skipped_refinements += r.skipped.len();
            for k in &r.skipped {
                counts.remove(k);
            }
            for k in &refine {
                if let Some(l) = counts.remove(k) {
                    if l > 1 {
                        counts.extend(k.children().map(|ch| (ch, l - 1)));
                    }
                }
            }
            report.refined += r.applied;
            progressed |= r.applied > 0;
            report.balance_splits += forest.balance_2to1();
        }
        let leaf_set: rustc_hash::FxHashSet<CellKey> = forest.leaves().iter().map(|c| c.key()).collect();
        counts.retain(|k, _| leaf_set.contains(k));
        let families: Vec<[CellKey; 4]> = family_starts(forest)
            .into_iter()
            .map(|(_, f)| f)
            .filter(|f| f.iter().all(|k| counts.get(k).is_some_and(|&l| l < 0)))
            .collect();
        if !families.is_empty() {
            let r = forest.coarsen(&families)?;
            report.skipped_coarsenings += r.skipped.len();
            for fam in &families {
                let parent = fam[0].parent().expect("non-root");
                let merged = !r.skipped.contains(&parent);
                let next = fam.iter().map(|k| counts.remove(k).unwrap_or(0)).max().unwrap_or(0) + 1;
                if merged && next < 0 {
                    counts.insert(parent, next);
                }
            }
            report.coarsened += r.applied;
            progressed |= r.applied > 0;
        }
        // Negative counts outside complete families can never be applied.
        let alive: rustc_hash::FxHashSet<CellKey> = family_starts(forest)
            .into_iter()
            .flat_map(|(_, f)| f)
            .collect();
        counts.retain(|k, l| *l > 0 || alive.contains(k));
        if !progressed {
            break;
        }
        report.generations += 1;
    }
    Ok(report)
}

/// Wall-clock seconds per phase of one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    /// Mesh extraction, dof numbering, assembly and the linear solve.
    pub solve: f64,
    pub recover_gradient: f64,
    pub recover_solution: f64,
    pub estimate: f64,
    /// Planning and plan execution.
    pub adapt: f64,
}

impl PhaseTimes {
    pub fn total(&self) -> f64 {
        self.solve + self.recover_gradient + self.recover_solution + self.estimate + self.adapt
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub n_el: usize,
    pub dofs: usize,
    pub h_min: f64,
    pub finest_level: u8,
    pub eta: f64,
    pub error: Option<f64>,
    pub effectivity: Option<f64>,
    pub solver_iterations: usize,
    pub refined: usize,
    pub coarsened: usize,
    pub times: PhaseTimes,
    /// Wall time of the loop body without the exact-error diagnostics.
    pub wall: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    MaxIterations,
    Stagnation,
    /// The plan left the mesh unchanged.
    Unchanged,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Tolerance => "tolerance reached",
            StopReason::MaxIterations => "i_max reached",
            StopReason::Stagnation => "mesh cardinality stagnated",
            StopReason::Unchanged => "mesh unchanged by the plan",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptReport {
    pub case: String,
    pub strategy: Strategy,
    pub records: Vec<IterationRecord>,
    pub stop: Option<StopReason>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

impl AdaptReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Deterministic per-iteration table (no timings).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iteration", "n_el", "dofs", "h_min", "finest_level", "eta", "error", "effectivity", "solver_iterations", "refined", "coarsened"])?;
        for r in &self.records {
            w.write_record(&[
                r.iteration.to_string(),
                r.n_el.to_string(),
                r.dofs.to_string(),
                format!("{:e}", r.h_min),
                r.finest_level.to_string(),
                format!("{:e}", r.eta),
                opt(r.error),
                opt(r.effectivity),
                r.solver_iterations.to_string(),
                r.refined.to_string(),
                r.coarsened.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-phase wall times in seconds.
    pub fn write_timing_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iteration", "solve", "recover_gradient", "recover_solution", "estimate", "adapt", "phases", "wall"])?;
        for r in &self.records {
            let t = &r.times;
            w.write_record(&[
                r.iteration.to_string(),
                format!("{:.6}", t.solve),
                format!("{:.6}", t.recover_gradient),
                format!("{:.6}", t.recover_solution),
                format!("{:.6}", t.estimate),
                format!("{:.6}", t.adapt),
                format!("{:.6}", t.total()),
                format!("{:.6}", r.wall),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for AdaptReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} / {}", self.case, self.strategy)?;
        for r in &self.records {
            write!(f, "  it {:2}  N_el {:8}  dofs {:8}  h_min {:.4e}  eta {:.4e}", r.iteration, r.n_el, r.dofs, r.h_min, r.eta)?;
            if let (Some(e), Some(x)) = (r.error, r.effectivity) {
                write!(f, "  err {e:.4e}  xi {x:.3}")?;
            }
            writeln!(f, "  [{:.2}s]", r.wall)?;
        }
        match self.stop {
            Some(s) => write!(f, "  stop: {s}"),
            None => write!(f, "  stop: aborted"),
        }
    }
}

/// Everything the loop computed on one mesh, for observers.
pub struct IterationState<'a> {
    pub iteration: usize,
    pub forest: &'a Forest,
    pub mesh: &'a MeshView,
    pub dofmap: &'a DofMap,
    pub u: &'a NodalField,
    pub gradient: &'a RecoveredGradient,
    pub recovered: &'a RecoveredSolution,
    pub estimate: &'a ErrorEstimate,
}

/// Final mesh and fields of a completed run.
pub struct AdaptRun {
    pub report: AdaptReport,
    pub forest: Forest,
    pub mesh: MeshView,
    pub dofmap: DofMap,
    pub u: NodalField,
    pub estimate: ErrorEstimate,
}

/// A run that stopped on an error, with the iterations completed before it.
#[derive(Debug)]
pub struct DriveFailure {
    pub report: AdaptReport,
    pub error: Error,
}

impl fmt::Display for DriveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} after {} completed iterations", self.error, self.report.records.len())
    }
}

impl std::error::Error for DriveFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub type DriveResult = std::result::Result<AdaptRun, Box<DriveFailure>>;

pub fn drive(case: &BenchmarkCase, cfg: &AdaptConfig, strategy: Strategy) -> DriveResult {
    drive_with(case, cfg, strategy, &mut |_| Ok(()))
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Outer loop with an observer called after each estimate.
pub fn drive_with(
    case: &BenchmarkCase,
    cfg: &AdaptConfig,
    strategy: Strategy,
    observer: &mut dyn FnMut(&IterationState) -> Result<()>,
) -> DriveResult {
    let mut report = AdaptReport { case: case.name.clone(), strategy, records: Vec::new(), stop: None };
    macro_rules! tryr {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(Box::new(DriveFailure { report, error })),
            }
        };
    }
    tryr!(cfg.validate());
    let mut forest = tryr!(case.initial_mesh.build().and_then(|f| f.with_level_bounds(
        cfg.min_level.min(case.initial_mesh.level),
        cfg.max_level.max(case.initial_mesh.level)
    )));
    let coeffs = &case.coefficients;
    let mut previous: Option<(MeshView, DofMap, NodalField)> = None;
    let mut last_counts = (0, 0);
    for iteration in 1..=cfg.i_max.max(1) {
        let body = Instant::now();
        let mut times = PhaseTimes::default();

        let t = Instant::now();
        let owners = tryr!(forest.partition_morton(cfg.n_parts));
        let mesh = tryr!(forest.extract_mesh(Some(&owners)));
        let dofmap = tryr!(DofMap::build(&mesh, &coeffs.dirichlet));
        let system = tryr!(assemble(&mesh, &dofmap, coeffs));
        let x0 = match &previous {
            Some((m, d, u)) => Some(system.restrict(&tryr!(u.transfer(m, d, &mesh, &dofmap)))),
            None => None,
        };
        let (x, sr) = tryr!(solve(&system.matrix, &system.rhs, x0.as_deref(), &cfg.solver));
        if !sr.converged {
            tryr!(Err(Error::SolverFailure(format!(
                "{:?} stalled at relative residual {:.3e} after {} iterations on {} unknowns (iteration {iteration})",
                sr.method,
                sr.residual,
                sr.iterations,
                system.rhs.len()
            ))));
        }
        let u = system.expand_solution(&x, &dofmap);
        times.solve = secs(t);

        let t = Instant::now();
        let edges = edge_gradients(&u, &mesh, &dofmap);
        let gradient = recover_gradient(&edges, &mesh);
        times.recover_gradient = secs(t);

        let t = Instant::now();
        let recovered = recover_solution(&edges, &gradient, &mesh);
        times.recover_solution = secs(t);

        let t = Instant::now();
        let est = estimate(&u, &recovered, &mesh, &dofmap);
        times.estimate = secs(t);

        let diag = Instant::now();
        let error = case.exact.as_ref().map(|ex| l2_error_nodal(&u, &mesh, &dofmap, ex.u.as_ref(), ERROR_ORDER));
        let xi = error.and_then(|e| effectivity(est.eta, e).ok());
        tryr!(observer(&IterationState {
            iteration,
            forest: &forest,
            mesh: &mesh,
            dofmap: &dofmap,
            u: &u,
            gradient: &gradient,
            recovered: &recovered,
            estimate: &est,
        }));
        let diag_time = secs(diag);

        let n_el = forest.len();
        let stagnated = match (cfg.stop_on_stagnation, report.records.last()) {
            (Some(th), Some(prev)) => (n_el as f64 - prev.n_el as f64).abs() / prev.n_el as f64 <= th,
            _ => false,
        };
        let stop = if est.eta <= cfg.tol {
            Some(StopReason::Tolerance)
        } else if stagnated {
            Some(StopReason::Stagnation)
        } else if iteration >= cfg.i_max {
            Some(StopReason::MaxIterations)
        } else {
            None
        };

        let mut record = IterationRecord {
            iteration,
            n_el,
            dofs: dofmap.n_dofs,
            h_min: mesh.h_min(),
            finest_level: forest.finest_level(),
            eta: est.eta,
            error,
            effectivity: xi,
            solver_iterations: sr.iterations,
            refined: last_counts.0,
            coarsened: last_counts.1,
            times,
            wall: 0.0,
        };

        if let Some(s) = stop {
            record.wall = secs(body) - diag_time;
            report.records.push(record);
            report.stop = Some(s);
            return Ok(AdaptRun { report, forest, mesh, dofmap, u, estimate: est });
        }

        let t = Instant::now();
        let plan = tryr!(match strategy {
            Strategy::Marking => mark(&est, &forest, cfg),
            Strategy::Metric => metric_plan(&est, &forest, cfg),
            Strategy::GradientIndicator => indicator_plan(&gradient_indicator(&u, &mesh, &dofmap), &forest, cfg),
        });
        let before = forest.clone();
        let ex = tryr!(execute(&plan, &mut forest));
        last_counts = (ex.refined + ex.balance_splits, ex.coarsened);
        let unchanged = forest == before;
        record.times.adapt = secs(t);
        record.wall = secs(body) - diag_time;
        report.records.push(record);
        if unchanged {
            report.stop = Some(StopReason::Unchanged);
            return Ok(AdaptRun { report, forest, mesh, dofmap, u, estimate: est });
        }
        previous = Some((mesh, dofmap, u));
    }
    unreachable!("the last iteration always stops")
}
