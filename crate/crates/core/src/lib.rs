//! Sampling logit equilibria of population games.
//!
//! Agents revising their action observe a sample of `k` opponents drawn with
//! replacement from the population, estimate the population state from the
//! sample, and choose by the `η`-logit rule against that estimate. The
//! aggregate choice rule `L^{k,η}` averages the logit rule over all sample
//! outcomes; its fixed points are sampling logit equilibria (SLE).
//!
//! The crate is `no_std` (it needs `alloc`) and is organised as:
//!
//! - [`game`]: population games with payoffs, gradients and Hessians, plus the
//!   catalog of example games.
//! - [`sampling`]: multinomial sample outcomes, masses and covariance.
//! - [`choice`]: best response, sampling best response, logit and sampling
//!   logit choice rules, and logit-weighted centering.
//! - [`equilibrium`]: fixed-point, eigenvector, quadratic and continuation
//!   solvers.
//! - [`dynamics`]: trajectories, vector fields and basin reports.
//! - [`approx`]: the second-order delta-method approximation of `L^{k,η}`
//!   through variance and curvature premiums, virtual payoffs and error audits.
//! - [`potential`]: perturbed potentials of two-action games.
//!
//! IO, configuration and the experiment runner live in the `slogit` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod approx;
pub mod choice;
pub mod dynamics;
pub mod equilibrium;
mod error;
pub mod game;
pub mod linalg;
mod math;
pub mod potential;
pub mod sampling;
pub mod state;

pub use error::{Error, Result};
pub use game::{LinearGame, Polynomial, PopulationGame, SeparableGame};
pub use linalg::Matrix;
pub use state::PopulationState;

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
