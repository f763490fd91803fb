//! Recovery-based adaptive mesh refinement on 2:1 balanced quadtree forests.
//!
//! The crate solves scalar advection-diffusion-reaction problems
//! `-div(eps grad u - beta u) + b u = f` with an exponentially fitted
//! finite-volume scheme on non-conforming quadtree meshes, recovers an
//! enriched gradient and a biquadratic solution from the discrete field,
//! and drives marking-based or metric-based adaptation from the resulting
//! `L2` estimator.
//!
//! Module map:
//! - [`forest`]: brick of quadtrees, refinement, balance, mesh extraction.
//! - [`space`]: constrained bilinear space, dof numbering, transfer.
//! - [`assembly`]: local exponential-fitting matrices and condensed assembly.
//! - [`linalg`]: CSR storage and preconditioned Krylov solvers.
//! - [`recovery`]: gradient and solution recovery.
//! - [`estimator`]: per-leaf estimator, exact error norms, gradient indicator.
//! - [`adaptivity`]: marking and metric plans, plan execution, outer driver.
//! - [`cases`]: benchmark problems and user-defined region problems.
//! - [`studies`]: uniform convergence sweeps and strategy comparisons.
//! - [`vtk`]: legacy VTK output.

pub mod adaptivity;
pub mod assembly;
pub mod cases;
pub mod error;
pub mod estimator;
pub mod forest;
pub mod linalg;
pub mod quadrature;
pub mod recovery;
pub mod space;
pub mod studies;
pub mod vtk;

pub use recovery::{EdgeGradients, RecoveredGradient, RecoveredSolution};
pub use cases::BenchmarkCase;
pub use estimator::ErrorEstimate;
pub use adaptivity::{AdaptConfig, AdaptPlan, AdaptReport, IterationRecord, Strategy};
pub use assembly::{AdrCoefficients, ScalarField, SparseSystem};
pub use error::{Error, Result};
pub use forest::{Cell, Forest, MeshView, Rect};
pub use linalg::{CsrMatrix, Method, Preconditioner, SolveOptions, SolveReport};
pub use space::{DirichletSpec, DofMap, NodalField};

/// Sentinel for absent indices in `u32` index arrays.
pub const NONE: u32 = u32::MAX;
