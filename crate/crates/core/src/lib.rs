//! Pseudo-spectral incompressible Navier–Stokes on the periodic square
//! `[0, 2π)²`, with the fractional-Sobolev functionals and Lagrangian
//! trajectory audits built on top of it.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`] – wavenumber grids, divergence-free spectral velocity
//!   fields, Fourier multipliers (Leray projection, `D^s`, norms) and exact
//!   pointwise evaluation.
//! * [`solver`] – integrating-factor RK4 time stepping, the heat semigroup
//!   and persisted run records.
//! * [`diagnostics`] – norm series, time integrals, weighted suprema and the
//!   log-Lipschitz / heat `H^{2-}_r` studies.
//! * [`tracer`] – particle advection through run records, separation series
//!   and the separation envelope.
//! * [`counterexample`] – the scalar ODE and weak-`L¹` examples.
//!
//! Batch kernels run data-parallel through rayon when the `parallel`
//! feature is enabled (the default) and fall back to plain iteration
//! otherwise. Results are identical in both modes.

pub mod counterexample;
pub mod diagnostics;
mod error;
pub mod exec;
pub mod solver;
pub mod spectral;
pub mod tracer;

pub use error::{Error, Result};
pub use spectral::{PhysicalField, SpectralField, SpectralVelocity, WavenumberGrid};
