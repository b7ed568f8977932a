//! Estimation of direct and spillover treatment effects from randomized
//! experiments on networks whose edges are observed with error.
//!
//! The crate is `no_std` (with `alloc`). Enabling the `std` feature turns on
//! rayon-backed parallelism for multi-start fits, bootstrap replicates and
//! simulation grids; results are identical with or without it.
//!
//! Module map:
//! - [`graph`]: directed influence networks, random generators, edge corruption.
//! - [`exposure`]: exposure conditions, Horvitz-Thompson and regression estimators,
//!   and the expected-HT bias oracle.
//! - [`prior`]: beta-binomial degree prior.
//! - [`mixture`]: latent exposure posteriors, outcome families and the
//!   observed-data likelihood.
//! - [`em`]: EM fitting, mean/contrast estimation, parametric bootstrap.
//! - [`sim`]: end-to-end simulation grid over mismeasurement rates.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod em;
mod error;
pub mod exposure;
pub mod graph;
pub mod math;
pub mod mixture;
mod par;
pub mod prior;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use exposure::{Condition, ExperimentDesign};
pub use graph::{DirectedGraph, NodeGroups};
pub use prior::BetaBinomialPrior;
