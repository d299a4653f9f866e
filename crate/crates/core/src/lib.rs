//! Pseudo-spectral simulation of the 1D and 2D Schrödinger–Poisson systems
//! with unbounded Newtonian kernels.
//!
//! The nonlocal potential `lambda P` is split into a position-only part fixed
//! by the initial mass (`m log<x>` in 2D, a multiple of `|x|` in 1D) plus a
//! bounded remainder; the split drives both the Strang integrator and the
//! Picard/Duhamel cross-check, and conserved quantities plus a priori bounds
//! are monitored along every run.

pub mod dynamics;
pub mod error;
mod fft;
pub mod grid;
pub mod kernels;
pub mod observables;
pub mod potential;
pub mod quadrature;
pub mod scenario;
pub mod snapshot;

pub use error::{Error, Result};
pub use grid::{make_grid, Field, Grid};
pub use potential::{KernelQuadrature, ModelParams, NonlocalPotential, PotentialSplit};
