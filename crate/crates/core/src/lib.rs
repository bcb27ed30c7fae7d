//! Benchmark tracking with capital injection.
//!
//! A fund manager tracks a benchmark by keeping the fund value above it,
//! injecting capital whenever the fund would fall below. In normalised
//! coordinates the state `Y ≥ 0` is a diffusion reflected at zero and the
//! cumulative injection is its local time. The crate provides:
//!
//! * [`model`]: market parameters, the closed-form classical solution and the
//!   exploratory (entropy-regularised) constants;
//! * [`sde`]: the reflected simulator and aggregated oracle dynamics;
//! * [`qlearn`]: continuous-time q-learning with martingale orthogonality;
//! * [`baseline`]: maximum-likelihood plug-in of the classical strategy;
//! * [`backtest`]: tracking on historical prices.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod backtest;
pub mod baseline;
pub mod cli;
pub mod config;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod model;
pub mod qlearn;
pub mod rng;
pub mod roots;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
