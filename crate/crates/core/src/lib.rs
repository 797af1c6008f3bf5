//! Finite-element simulation of damped linear elastodynamics on an annulus
//! or spherical shell, with a dynamic acoustic law on the inner boundary.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] builds meshes, labels Γ0/Γ1, computes boundary frames and
//!   the damping collar.
//! * [`tangential`] holds the surface calculus on Γ1 and the boundary forms.
//! * [`assembly`] builds the bulk forms, trace coupling and energy Gram
//!   matrix.
//! * [`evolution`] applies the generator, solves resolvents, time-steps and
//!   estimates the spectral abscissa.
//! * [`analysis`] computes energies, decay fits, the trace constant and the
//!   multiplier audits.
//! * [`scenario`] ties everything together behind a JSON configuration.

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod linalg;
pub mod scenario;
pub mod tangential;

pub use error::{Error, Result};
