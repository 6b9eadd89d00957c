//! Multiple-timescale analysis toolkit for a conductance-based neuron
//! model.
//!
//! The crate dissects a four-dimensional membrane model whose variables
//! evolve on up to four distinct rates. It provides the nondimensionalised
//! vector fields, the slaved-variable graphs that describe the attracting
//! and repelling sheets of the two-dimensional critical manifold, fold
//! curves and folded singularities of the slow flow, displacement
//! integrals for the induced return map, threshold currents separating
//! firing-pattern regimes, trajectory classification, and linearised
//! analysis near the one-dimensional superslow manifolds.

pub mod dynamics;
pub mod error;
pub mod gating;
pub mod geometry;
pub mod model;
pub mod ode;
pub mod params;
pub mod quad;
pub mod reduction;
pub mod return_map;
pub mod solve;

pub use error::{Error, Result};
pub use params::{GateKind, ModelParameters, Regime};
