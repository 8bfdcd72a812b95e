//! Multi-fidelity uncertainty quantification.
//!
//! Learns `p(y | x)` between cheap approximate-solver outputs `x` and an
//! expensive exact-solver output `y` with a kernel-expansion regression of
//! unknown cardinality, inferred by an adaptive sequential Monte Carlo sampler
//! whose rejuvenation kernel is a reversible-jump Metropolis–Hastings mixture.
//! The particle posterior is then pushed through a sampled `π_x` to estimate
//! exceedance probabilities, CDFs and expectations of `y` with credible bounds.

pub mod checkpoint;
pub mod error;
pub mod model;
pub mod predict;
pub mod rjmcmc;
pub mod rng;
pub mod smc;
pub mod solvers;
pub mod special;

pub use error::{Error, Result};
