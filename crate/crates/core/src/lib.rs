//! Hub location with congestion and time-sensitive demand.
//!
//! The crate models a profit-maximising hub network design problem in which
//! hubs are opened at one of several service levels (capacity, setup cost,
//! transit time) and commodities are served, if at all, at one of several
//! demand levels (volume, unit revenue, maximum service time). Routes visit
//! one or two hubs.
//!
//! Module map:
//!
//! * [`instance`]: problem data and derived route quantities.
//! * [`generator`]: CAB-style raw data ingestion and benchmark expansion.
//! * [`milp`]: solver-agnostic MILP container, evaluation and MPS exchange.
//! * [`formulations`]: the 4-index (F1) and 5-index (F2) models.
//! * [`preprocess`]: optimality-condition variable fixing.
//! * [`solver`]: exact two-tier branch-and-bound for small instances.
//! * [`oracle`]: brute-force enumeration used as ground truth.
//! * [`analysis`]: first-principles validation and reporting statistics.

// Dense matrices are indexed by node throughout; index loops read better.
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod formulations;
pub mod generator;
pub mod instance;
pub mod milp;
pub mod oracle;
pub mod preprocess;
pub mod solution;
pub mod solver;

pub use analysis::{validate, SolutionStats, ValidationReport};
pub use instance::{Instance, InstanceError, RouteKey};
pub use preprocess::{FixMask, FixReport, FixRule};
pub use solution::{Served, Solution, SolveStatus};
pub use solver::{solve_exact, SolverConfig};

/// Absolute tolerance used when comparing money or time quantities.
pub const EPS: f64 = 1e-9;
