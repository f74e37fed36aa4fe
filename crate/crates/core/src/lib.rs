//! Numerical laboratory for one-dimensional random walks among random,
//! possibly long-range, conductances.

pub mod ensemble;
pub mod environment;
pub mod error;
pub mod harness;
pub mod interval_solver;
pub mod reference;
pub mod rng;
pub mod walk;

pub use environment::{Environment, EnvironmentSpec};
pub use error::{LabError, Result};
pub use walk::{Path, SimOptions};
