//! Two-sided Monte Carlo bounds for optimal investment and consumption
//! problems in diffusion-driven, possibly incomplete, markets.
//!
//! The upper bound comes from the convex dual of the value function, which
//! is an expectation over the state-price density and can be estimated by
//! forward simulation. The lower bound subtracts the expected Fenchel slack
//! at the horizon of a concrete portfolio rule. Their ratio to current
//! wealth gives a dimensionless efficiency measure.
//!
//! Layout:
//! - [`market_model`]: coefficient functions, utilities and their duals.
//! - [`path_engine`]: time grids, seeded Brownian increments, Euler/log-exact stepping.
//! - [`dual_bounds`]: estimators of `g` and `h`, the dual start search and the bounds.
//! - [`pathwise`]: the optimal trajectory along one realised Brownian path.
//! - [`benchmarks`]: closed-form Merton, a policy-improvement PDE solver and
//!   functional quantization, used as independent oracles.

pub mod benchmarks;
pub mod dual_bounds;
mod error;
pub mod market_model;
pub mod path_engine;
pub mod pathwise;
pub mod rules;
pub mod stats;

pub use error::{Error, Result};
