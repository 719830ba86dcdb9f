//! Semi-Lagrangian discontinuous Galerkin transport for two-dimensional
//! incompressible flows and the guiding-center Vlasov model on periodic
//! Cartesian meshes.

pub mod adaptive_control;
pub mod characteristics;
pub mod convergence;
pub mod dg_space;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod ldg_poisson;
pub mod limiter;
pub mod problems;
pub mod quadrature;
pub mod sldg_update;
pub mod solver;
pub mod upstream_geometry;

pub use dg_space::{Basis, DGField, ErrorNorms};
pub use error::{Result, SldgError};
pub use grid::{CellId, Domain, Mesh, Point};
pub use ldg_poisson::{LdgOperator, LinearSolver, Model, VectorField};
pub use limiter::LimiterConfig;
pub use adaptive_control::{AdaptiveConfig, ControllerState, Decision};
pub use solver::{FieldSource, SchemeConfig, Solver, StepReport};
pub use upstream_geometry::UpstreamMode;
pub use characteristics::TraceOrder;
pub use diagnostics::{DiagnosticsLog, DiagnosticsRecord};
pub use problems::{Discretization, ProblemKind, ProblemSpec};
