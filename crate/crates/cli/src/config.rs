//! Run configuration: TOML file, `QREC_*` environment variables and flags,
//! applied in that order over the case defaults.

use clap::Args;
use quadrec::adaptivity::{AdaptConfig, Strategy};
use quadrec::cases::{self, BenchmarkCase};
use quadrec::linalg::{Method, Preconditioner};
use serde::Deserialize;
use std::fmt;
use std::path::{Path, PathBuf};
use toml::Spanned;

/// Invalid configuration, anchored to a file line when it came from one.
#[derive(Debug)]
pub struct ConfigError {
    pub origin: Option<(PathBuf, usize)>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.origin {
            Some((path, line)) => write!(f, "{}:{line}: {}", path.display(), self.msg),
            None => f.write_str(&self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

fn plain(msg: impl Into<String>) -> ConfigError {
    ConfigError { origin: None, msg: msg.into() }
}

/// Flags shared by every subcommand. Each has a `QREC_` environment fallback.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long, env = "QREC_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Built-in case: test1, test2_rect, test2_circle, test3.
    #[arg(long, env = "QREC_CASE", global = true)]
    pub case: Option<String>,
    /// Strategy; comma-separated list for run-compare.
    #[arg(long, env = "QREC_STRATEGY", global = true)]
    pub strategy: Option<String>,
    #[arg(long, env = "QREC_TOL", global = true)]
    pub tol: Option<f64>,
    #[arg(long, env = "QREC_IMAX", global = true)]
    pub imax: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, env = "QREC_THREADS", global = true)]
    pub threads: Option<usize>,
    /// Morton partitions used by the recovery.
    #[arg(long, env = "QREC_PARTS", global = true)]
    pub parts: Option<usize>,
    #[arg(long, env = "QREC_OUT", global = true)]
    pub out: Option<PathBuf>,
    /// Write mesh_iter_<i>.vtk for every iteration.
    #[arg(long, env = "QREC_VTK_EVERY_ITER", global = true)]
    pub vtk_every_iter: bool,
    /// Accepted for property-test harnesses; runs themselves are deterministic.
    #[arg(long, env = "QREC_SEED", global = true)]
    pub seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    case: Option<Spanned<String>>,
    problem: Option<Spanned<PathBuf>>,
    strategy: Option<Spanned<String>>,
    strategies: Option<Spanned<Vec<String>>>,
    out: Option<PathBuf>,
    threads: Option<Spanned<usize>>,
    parts: Option<Spanned<usize>>,
    seed: Option<u64>,
    #[serde(default)]
    adapt: AdaptSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default)]
    converge: ConvergeSection,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AdaptSection {
    tol: Option<f64>,
    i_max: Option<usize>,
    delta1: Option<f64>,
    delta2: Option<f64>,
    n_ref: Option<u32>,
    n_coarsen: Option<u32>,
    n_ref_auto: Option<u32>,
    max_step: Option<u32>,
    min_level: Option<u8>,
    max_level: Option<u8>,
    stop_on_stagnation: Option<f64>,
    indicator_c1: Option<f64>,
    indicator_c2: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    rel_tol: Option<f64>,
    max_iter: Option<usize>,
    method: Option<Spanned<String>>,
    preconditioner: Option<Spanned<String>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    vtk_every_iter: Option<bool>,
    csv_tables: Option<bool>,
    timing: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConvergeSection {
    levels: Option<Spanned<[u8; 2]>>,
}

/// Fully resolved settings for one invocation.
pub struct RunConfig {
    pub case: BenchmarkCase,
    pub strategies: Vec<Strategy>,
    pub adapt: AdaptConfig,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub vtk_every_iter: bool,
    pub csv_tables: bool,
    pub timing: bool,
    /// Inclusive uniform levels for run-converge.
    pub levels: Option<(u8, u8)>,
    pub seed: Option<u64>,
}

struct Source<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn at<T>(&self, item: &Spanned<T>, msg: impl Into<String>) -> ConfigError {
        ConfigError { origin: Some((self.path.to_path_buf(), self.line(item.span().start))), msg: msg.into() }
    }
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.trim().parse::<Strategy>().map_err(|e| e.to_string())
}

impl RunConfig {
    pub fn resolve(flags: &Overrides) -> Result<RunConfig, ConfigError> {
        let text = match &flags.config {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| plain(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        let path = flags.config.clone().unwrap_or_default();
        let src = Source { path: &path, text: &text };
        let file: FileConfig = toml::from_str(&text).map_err(|e| ConfigError {
            origin: Some((path.clone(), e.span().map_or(1, |s| src.line(s.start)))),
            msg: e.message().to_string(),
        })?;

        let case = match (&flags.case, &file.case, &file.problem) {
            (Some(name), _, _) => cases::by_name(name).map_err(|e| plain(format!("--case: {e}")))?,
            (None, Some(_), Some(p)) => return Err(src.at(p, "set either `case` or `problem`, not both")),
            (None, Some(name), None) => cases::by_name(name.get_ref()).map_err(|e| src.at(name, e.to_string()))?,
            (None, None, Some(p)) => {
                let rel = p.get_ref();
                let full = match path.parent() {
                    Some(dir) if rel.is_relative() => dir.join(rel),
                    _ => rel.clone(),
                };
                if !full.exists() {
                    return Err(src.at(p, format!("problem file {} does not exist", full.display())));
                }
                cases::from_region_file(&full).map_err(|e| src.at(p, format!("{}: {e}", full.display())))?
            }
            (None, None, None) => return Err(plain("missing case name: pass --case or set `case` in the config")),
        };

        let strategies = match (&flags.strategy, &file.strategies, &file.strategy) {
            (Some(list), _, _) => list
                .split(',')
                .map(parse_strategy)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| plain(format!("--strategy: {e}")))?,
            (None, Some(list), _) => list
                .get_ref()
                .iter()
                .map(|s| parse_strategy(s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| src.at(list, e))?,
            (None, None, Some(s)) => vec![parse_strategy(s.get_ref()).map_err(|e| src.at(s, e))?],
            (None, None, None) => vec![Strategy::Metric],
        };

        let mut adapt = AdaptConfig::for_case(&case);
        let a = &file.adapt;
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = a.$field { adapt.$field = v; } )* };
        }
        set!(tol, i_max, delta1, delta2, n_ref, n_coarsen, max_step, min_level, max_level, indicator_c1, indicator_c2);
        if a.n_ref_auto.is_some() {
            adapt.n_ref_auto = a.n_ref_auto.filter(|&s| s > 0);
        }
        if a.stop_on_stagnation.is_some() {
            adapt.stop_on_stagnation = a.stop_on_stagnation;
        }
        let s = &file.solver;
        if let Some(v) = s.rel_tol {
            adapt.solver.rel_tol = v;
        }
        if s.max_iter.is_some() {
            adapt.solver.max_iter = s.max_iter;
        }
        if let Some(m) = &s.method {
            adapt.solver.method = match m.get_ref().as_str() {
                "auto" => Method::Auto,
                "cg" => Method::Cg,
                "bicgstab" => Method::BiCgStab,
                other => return Err(src.at(m, format!("unknown method '{other}' (auto, cg, bicgstab)"))),
            };
        }
        if let Some(p) = &s.preconditioner {
            adapt.solver.preconditioner = match p.get_ref().as_str() {
                "jacobi" => Preconditioner::Jacobi,
                "ilu0" => Preconditioner::Ilu0,
                other => return Err(src.at(p, format!("unknown preconditioner '{other}' (jacobi, ilu0)"))),
            };
        }
        if let Some(p) = &file.parts {
            adapt.n_parts = *p.get_ref();
        }
        if let Some(v) = flags.tol {
            adapt.tol = v;
        }
        if let Some(v) = flags.imax {
            adapt.i_max = v;
        }
        if let Some(v) = flags.parts {
            adapt.n_parts = v;
        }
        adapt.validate().map_err(|e| plain(format!("invalid adaptation settings: {e}")))?;
        if adapt.n_parts == 0 {
            return Err(match &file.parts {
                Some(p) if flags.parts.is_none() => src.at(p, "parts must be at least 1"),
                _ => plain("--parts must be at least 1"),
            });
        }

        let threads = flags.threads.or(file.threads.as_ref().map(|t| *t.get_ref()));
        if threads == Some(0) {
            return Err(plain("threads must be at least 1"));
        }
        let levels = match &file.converge.levels {
            Some(l) => {
                let [lo, hi] = *l.get_ref();
                if lo > hi {
                    return Err(src.at(l, format!("levels [{lo}, {hi}] are decreasing")));
                }
                Some((lo, hi))
            }
            None => None,
        };
        let o = &file.output;
        Ok(RunConfig {
            case,
            strategies,
            adapt,
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            threads,
            vtk_every_iter: flags.vtk_every_iter || o.vtk_every_iter.unwrap_or(false),
            csv_tables: o.csv_tables.unwrap_or(true),
            timing: o.timing.unwrap_or(true),
            levels,
            seed: flags.seed.or(file.seed),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn with_file(text: &str) -> (tempfile::NamedTempFile, Overrides) {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        let o = Overrides { config: Some(f.path().to_path_buf()), ..Default::default() };
        (f, o)
    }

    #[test]
    fn file_values_then_flags() {
        let (_f, mut o) = with_file("case = \"test1\"\nstrategy = \"marking\"\n[adapt]\ntol = 1e-3\ni_max = 4\n");
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!(c.case.name, "test1");
        assert_eq!(c.strategies, vec![Strategy::Marking]);
        assert_eq!((c.adapt.tol, c.adapt.i_max), (1e-3, 4));
        o.tol = Some(1e-2);
        o.strategy = Some("metric,gradient_indicator".into());
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!(c.adapt.tol, 1e-2);
        assert_eq!(c.strategies, vec![Strategy::Metric, Strategy::GradientIndicator]);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let (f, o) = with_file("case = \"test1\"\n\n[adapt]\ntoll = 1e-3\n");
        let e = RunConfig::resolve(&o).err().unwrap();
        assert_eq!(e.origin.as_ref().unwrap().1, 4, "{e}");
        assert!(e.to_string().starts_with(&format!("{}:4:", f.path().display())));
        assert!(e.msg.contains("toll"));
    }

    #[test]
    fn bad_case_and_strategy_are_line_anchored() {
        let (_f, o) = with_file("# comment\ncase = \"test9\"\n");
        assert_eq!(RunConfig::resolve(&o).err().unwrap().origin.unwrap().1, 2);
        let (_f, o) = with_file("case = \"test1\"\nstrategies = [\"metric\", \"bogus\"]\n");
        assert_eq!(RunConfig::resolve(&o).err().unwrap().origin.unwrap().1, 2);
        let (_f, o) = with_file("case = \"test1\"\n[solver]\nmethod = \"gmres\"\n");
        assert_eq!(RunConfig::resolve(&o).err().unwrap().origin.unwrap().1, 3);
    }

    #[test]
    fn missing_case_is_an_error() {
        let e = RunConfig::resolve(&Overrides::default()).err().unwrap();
        assert!(e.msg.contains("missing case"));
        let (_f, o) = with_file("problem = \"nope.toml\"\n");
        assert!(RunConfig::resolve(&o).err().unwrap().msg.contains("does not exist"));
    }

    #[test]
    fn problem_file_is_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.toml"), "[background]\nepsilon = 1.0\nf = 1.0\n[[dirichlet]]\nside = \"all\"\nvalue = 0.0\n").unwrap();
        std::fs::write(dir.path().join("run.toml"), "problem = \"p.toml\"\n").unwrap();
        let o = Overrides { config: Some(dir.path().join("run.toml")), ..Default::default() };
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!(c.case.name, "custom");
        assert!(c.case.exact.is_none());
    }
}
