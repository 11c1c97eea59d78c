//! Numerical laboratory for one-dimensional backward SDEs with integrable
//! terminal data.
//!
//! The crate is `no_std` (it needs `alloc`). IO, the command line front end
//! and parallel drivers live in the `bsdelab` companion crate.
//!
//! Layout:
//! - [`stochastic`]: time grids, counter-based Brownian paths.
//! - [`generators`]: the generator abstraction, built-in examples, terminal
//!   conditions and the `expr` mini language.
//! - [`convolution`]: inf/sup-convolution approximants of a generator.
//! - [`assumptions`]: sampling checks for the structural assumptions.
//! - [`solver`]: regression Monte Carlo backward scheme.
//! - [`experiments`]: monotone-limit, comparison and convergence experiments.

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod assumptions;
pub mod convolution;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod generators;
mod math;
mod optimize;
pub mod regression;
pub mod rng;
pub mod solver;
pub mod stochastic;

pub use error::{Error, Result};
