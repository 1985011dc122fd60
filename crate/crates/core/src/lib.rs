//! Adaptive pseudo-transient continuation Galerkin solver for semilinear
//! singularly perturbed problems `−εΔu = f(u)` with `u = 0` on the boundary.
//!
//! The pipeline is: [`mesh`] builds and refines simplicial meshes, [`fem`]
//! assembles P1 operators, [`ptc`] takes continuation steps with adaptive
//! step sizes, [`estimator`] splits the residual into linearization and
//! discretization parts, and [`driver`] decides between stepping and refining.

pub mod convergence;
pub mod driver;
pub mod estimator;
pub mod fem;
pub mod linear_solver;
pub mod mesh;
pub mod problems;
pub mod ptc;
pub mod quadrature;
pub mod sparse;

pub use driver::{run, Action, AdaptiveConfig, AdaptiveOutcome, DriverError, IterationRecord, Termination};
pub use fem::{FemFunction, FemProblem};
pub use mesh::{build_initial_mesh, DomainSpec, Mesh};
pub use problems::{builtin, ProblemSpec};
pub use ptc::{HilbertProblem, PtcError};
