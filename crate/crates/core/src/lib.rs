//! Numerical laboratory for the parabolic total-variation flow.
//!
//! Fields live on uniform cell-centred grids ([`grid`]). The total variation
//! is the upwind discretization in [`tvmeasure`]; [`flow`] advances the flow
//! by implicit Euler steps, each one a ROF problem solved by a primal-dual
//! method that also yields the flux `z`. [`certify`] and [`continuity`]
//! evaluate the variational, energy and oscillation statements on sampled
//! fields, and [`examples`] supplies closed-form oracles.

pub mod certify;
pub mod continuity;
pub mod error;
pub mod examples;
pub mod flow;
pub mod grid;
pub mod quadrature;
pub mod tvmeasure;
mod upwind;

pub use error::{Error, Result};
pub use flow::{DualField, SolverConfig};
pub use grid::{Ball, Cylinder, Grid, OscillationData, SpaceTimeField, SpatialBox};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
