//! Coordinated state estimation for power grids whose sensor channels drop
//! packets at random.
//!
//! The pipeline: a [`grid::GridModel`] is solved and linearized into a state
//! matrix; sensor channels with delivery ratios become a [`shs::ScenarioSet`];
//! [`observer::design_observer`] builds one reduced observer per scenario and
//! recombines them; [`analysis`] checks convergence and the noise floor, and
//! [`sim`] runs Monte Carlo replicas.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod numerics;
pub mod observer;
pub mod rng;
pub mod shs;
pub mod sim;

pub use error::{Error, Result};
