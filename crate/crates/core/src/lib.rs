//! Stationary energy-resolved transport of interacting bosons through a
//! disordered slab.
//!
//! The crate discretizes the nonlinear ladder transport equation on a
//! depth x energy grid, solves it, and provides the flux observables and
//! Monte Carlo cross-checks used to validate each kernel.

pub mod collision;
pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod expint;
mod krylov;
pub mod mc;
pub mod output;
pub mod propagator;
pub mod scenario;
pub mod solver;

pub use collision::CollisionTables;
pub use config::{parse_config, Config};
pub use error::{Error, Result};
pub use propagator::PropagatorMatrix;
pub use scenario::{DepthGrid, EnergyGrid, Scenario, Scheme};
pub use solver::{SolveResult, SpectralField, TransportProblem};
