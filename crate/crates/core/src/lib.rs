//! Microscopic simulation of moderately interacting shattering particles and
//! the reaction-diffusion system that describes their large-population limit.
//!
//! The crate is split the same way the problem is:
//!
//! - [`material`]: species masses, diffusion constants, velocity fields,
//!   collision rates and fragmentation tables, with validation of the mass
//!   conservation constraints.
//! - [`kernels`]: the Gaussian interaction and smoothing kernels, their
//!   moderate scaling, and fast evaluation of kernel-smoothed empirical
//!   measures (cell lists and an exact Fourier sum on the torus).
//! - [`particles`]: the stochastic particle system (Euler–Maruyama transport,
//!   effective-field collision clocks sampled by Poisson thinning, shattering).
//! - [`pde`]: explicit finite-difference solver for the macroscopic system and
//!   the spatially homogeneous ODE used as an independent oracle.
//! - [`observables`]: smoothed densities, L2 distances, the dictionary metric,
//!   mass diagnostics and the fluctuation probe.
//! - [`harness`]: scenarios, replica orchestration, convergence studies and
//!   the regression suite.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod material;
pub mod observables;
pub mod particles;
pub mod pde;

pub use error::{Error, Result, ValidationReport, Violation};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Small fixed-size vector used for positions, displacements and velocities.
pub type Vec3 = [f64; MAX_DIM];
