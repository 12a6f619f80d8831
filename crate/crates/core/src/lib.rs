//! Decentralized frequency and phase synchronization for distributed phased
//! arrays.
//!
//! The crate simulates `N` nodes with free-running local oscillators that
//! share noisy estimates of their frequency and phase over a random
//! undirected graph, and drives them to agreement with one of two
//! decentralized protocols:
//!
//! * [`mpac`]: message-passing average consensus. Nodes exchange exclusive
//!   weighted partial averages together with damped weight sums.
//! * [`baseline`]: classical linear consensus with a doubly-stochastic
//!   Metropolis mixing matrix.
//!
//! [`analysis`] holds the closed-form fixed point the message-passing engine
//! converges to, [`metrics`] the dispersion statistic used to decide
//! synchronization, and [`experiment`] the seeded Monte Carlo harness used by
//! the `dpa-sim` binary.

pub mod analysis;
pub mod baseline;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod mpac;
pub mod oscillator;
pub mod seed;

pub use error::{Error, Result};
