//! Wigner-Smith time-delay matrix of multichannel disordered wires.
//!
//! Monte Carlo integrators for the effective matrix SDEs, the exact microscopic
//! scattering problem, β-Laguerre sampling, closed-form moments and the
//! large-N resolvent flow.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod matrix;
pub mod noise;
pub mod params;
pub mod resolvent;
pub mod rmt;
pub mod rng;
pub mod sde;
pub mod microscopic;
pub mod moments;
pub mod stats;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, HermitianMatrix, SymmetryClass, UnitaryMatrix, C64};
pub use params::{ModelParams, Scheme, SdeConfig};
pub use rng::RngStream;
