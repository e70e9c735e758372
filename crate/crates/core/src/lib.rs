//! Least-squares finite elements for viscous-plastic sea-ice dynamics.
//!
//! Stress is carried as an independent H(div)-conforming unknown (one
//! Raviart-Thomas field per tensor row), velocity as a continuous Lagrange
//! field. Each time step first advects ice concentration and height by a
//! bound-constrained least-squares solve, then minimizes the momentum and
//! constitutive residuals by damped Gauss-Newton.

pub mod active_set;
pub mod assembly;
pub mod config;
pub mod constitutive;
pub mod driver;
pub mod elements;
pub mod error;
pub mod mesh;
pub mod momentum;
pub mod output;
pub mod scenario;
pub mod state;
pub mod transport;
pub mod verify;

pub use config::Config;
pub use error::{Error, Result};
pub use mesh::Mesh;
