//! `quadrec`: adaptive runs, uniform convergence sweeps and strategy comparisons.

mod config;

use anyhow::Context;
use clap::{Parser, Subcommand};
use config::{ConfigError, Overrides, RunConfig};
use quadrec::adaptivity::{drive_with, AdaptRun, DriveFailure, IterationState};
use quadrec::studies::{self, DofErrorCurve};
use quadrec::vtk::{write_vtk_file, VtkFields};
use quadrec::{Error, MeshView, Strategy};
use std::path::Path;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "quadrec", version, about = "Recovery-based adaptive refinement on quadtree forests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop with the first configured strategy.
    #[command(name = "run-adapt")]
    Adapt,
    /// Uniform sweep plus a metric-adapted run, compared by dofs at equal error.
    #[command(name = "run-converge")]
    Converge,
    /// Run two or more strategies from the same configuration.
    #[command(name = "run-compare")]
    Compare,
}

/// Failures mapped to exit codes: 1 for input errors, 2 for solver failures.
enum Failure {
    Input(anyhow::Error),
    Solver(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.into())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::SolverFailure(_) => Failure::Solver(e.into()),
            _ => Failure::Input(e.into()),
        }
    }
}

impl From<Box<DriveFailure>> for Failure {
    fn from(f: Box<DriveFailure>) -> Self {
        let solver = matches!(f.error, Error::SolverFailure(_));
        let e = anyhow::Error::new(*f);
        if solver {
            Failure::Solver(e)
        } else {
            Failure::Input(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver failure: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    if let Some(seed) = cfg.seed {
        eprintln!("note: seed {seed} has no effect on deterministic runs");
    }
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")
            .map_err(Failure::Input)?;
    }
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating {}", cfg.out.display()))
        .map_err(Failure::Input)?;
    match cli.command {
        Command::Adapt => run_adapt(&cfg),
        Command::Converge => run_converge(&cfg),
        Command::Compare => run_compare(&cfg),
    }
}

fn write_mesh(path: &Path, title: &str, mesh: &MeshView, eta_k: &[f64], u_h: &[f64]) -> quadrec::Result<()> {
    let fields = VtkFields { cell_scalars: vec![("eta_k", eta_k)], point_scalars: vec![("u_h", u_h)] };
    write_vtk_file(path, title, mesh, &fields)
}

/// One adaptive run with its artifacts written under `dir`.
fn adapt_into(cfg: &RunConfig, strategy: Strategy, dir: &Path) -> Result<AdaptRun, Failure> {
    std::fs::create_dir_all(dir)?;
    let title = format!("{} {}", cfg.case.name, strategy);
    let mut observer = |s: &IterationState| {
        if cfg.vtk_every_iter {
            let u = s.u.expand(s.dofmap);
            let path = dir.join(format!("mesh_iter_{}.vtk", s.iteration));
            write_mesh(&path, &format!("{title} iteration {}", s.iteration), s.mesh, &s.estimate.eta_k, &u)?;
        }
        Ok(())
    };
    let result = drive_with(&cfg.case, &cfg.adapt, strategy, &mut observer);
    let report = match &result {
        Ok(run) => &run.report,
        Err(f) => &f.report,
    };
    if cfg.csv_tables {
        report.write_csv(dir.join("report.csv"))?;
    }
    if cfg.timing {
        report.write_timing_csv(dir.join("timing.csv"))?;
    }
    let run = result?;
    let u = run.u.expand(&run.dofmap);
    write_mesh(&dir.join("solution.vtk"), &title, &run.mesh, &run.estimate.eta_k, &u)?;
    println!("{}", run.report);
    Ok(run)
}

fn run_adapt(cfg: &RunConfig) -> Result<(), Failure> {
    adapt_into(cfg, cfg.strategies[0], &cfg.out)?;
    Ok(())
}

fn run_converge(cfg: &RunConfig) -> Result<(), Failure> {
    if cfg.case.exact.is_none() {
        return Err(Failure::Input(anyhow::anyhow!(
            "case '{}' has no exact solution; run-converge needs one",
            cfg.case.name
        )));
    }
    let init = cfg.case.initial_mesh.level;
    let (lo, hi) = cfg.levels.unwrap_or((init, init + 6));
    let study = studies::uniform_sweep(&cfg.case, lo..=hi, &cfg.adapt.solver)?;
    if cfg.csv_tables {
        study.write_csv(cfg.out.join("convergence.csv"))?;
    }
    println!("{:>5} {:>10} {:>12} {:>12} {:>12} {:>12} {:>12}", "level", "dofs", "h_min", "u_h", "u*", "grad u_h", "sigma*");
    for r in &study.rows {
        let e = &r.errors;
        println!(
            "{:>5} {:>10} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            r.level, r.dofs, r.h_min, e.u_h, e.u_star, e.grad_u_h, e.sigma
        );
    }
    if study.rows.len() >= 2 {
        let [u_h, u_star, grad, sigma] = study.slopes(study.rows.len())?;
        println!("slopes vs h_min: u_h {u_h:.3}  u* {u_star:.3}  grad u_h {grad:.3}  sigma* {sigma:.3}");
    } else {
        println!("one level: no slopes");
    }

    let run = adapt_into(cfg, Strategy::Metric, &cfg.out.join("metric"))?;
    let adapted = DofErrorCurve::from_report(&run.report);
    let uniform = study.curve();
    if cfg.csv_tables {
        studies::write_dof_error_csv(cfg.out.join("dofs_error.csv"), &[("uniform", &uniform), ("metric", &adapted)])?;
    }
    match DofErrorCurve::matched(&adapted, &uniform) {
        Some(m) => println!(
            "matched error {:.4e}: metric {:.0} dofs, uniform {:.0} dofs, ratio {:.3}",
            m.error,
            m.adapted,
            m.uniform,
            m.ratio()
        ),
        None => println!("no common error level between the uniform and adapted runs"),
    }
    Ok(())
}

fn run_compare(cfg: &RunConfig) -> Result<(), Failure> {
    if cfg.strategies.len() < 2 {
        return Err(Failure::Input(anyhow::anyhow!(
            "run-compare needs at least two strategies, got {}",
            cfg.strategies.len()
        )));
    }
    let mut reports = Vec::new();
    for &s in &cfg.strategies {
        reports.push(adapt_into(cfg, s, &cfg.out.join(s.name()))?.report);
    }
    if cfg.csv_tables {
        studies::write_comparison_csv(cfg.out.join("compare.csv"), &reports)?;
    }
    println!("{:<20} {:>10} {:>10} {:>10}", "strategy", "iterations", "n_el", "dofs");
    for r in &reports {
        if let Some(last) = r.last() {
            println!("{:<20} {:>10} {:>10} {:>10}", r.strategy.name(), r.iterations(), last.n_el, last.dofs);
        }
    }
    Ok(())
}
