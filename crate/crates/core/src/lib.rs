//! Adaptive biasing force (ABF) and projected ABF sampling of two-dimensional
//! free-energy landscapes.
//!
//! The running mean-force estimate lives on a periodic reaction-coordinate
//! grid ([`grid`]). PABF biases the dynamics with the gradient part of that
//! estimate, obtained from a density-weighted Helmholtz projection
//! ([`projection`]), instead of the raw estimate.

pub mod check;
pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod estimator;
pub mod fieldio;
pub mod grid;
pub mod integrator;
pub mod projection;
pub mod report;
pub mod systems;

pub use config::{parse_config, Mode, RunSpec, SnapshotSchedule};
pub use driver::{run, run_replicated, RunOutput, Simulation, Snapshot};
pub use error::{Error, Result};
pub use estimator::BiasState;
pub use grid::{RcGrid, ScalarField, VectorField};
pub use projection::{project, ProjectionResult};
pub use systems::{Configuration, SystemKind, SystemSpec};
