//! Dual-sourcing multi-period inventory optimization.
//!
//! This crate simulates a retailer ordering each product through two
//! channels, a fast expensive just-in-time (JIT) source and a discounted
//! long-lead-time (LLT) source with stochastic arrival profiles, and trains
//! neural buy policies by backpropagating the discounted reward directly
//! through the simulator. A second network, the capacity coordinator,
//! forecasts storage prices that keep the whole buying population inside
//! shared capacity limits; a model-predictive-control coordinator and the
//! classical BSHT / Tailored Base-Surge policies serve as baselines, all
//! evaluated by a common backtesting harness on seeded synthetic worlds.
//!
//! The `examples/` directory walks through every major capability:
//!
//! - `generate_world`: build and validate a synthetic world file
//! - `simulate_baselines`: roll classical policies and export trajectories
//! - `autodiff_rollout`: differentiate a rollout with the scalar tape
//! - `train_buy_policy`: direct-backpropagation policy training
//! - `train_coordinator`: neural capacity-price coordinator training
//! - `mpc_prices`: receding-horizon dual-price search
//! - `backtest_report`: end-to-end comparison with violation metrics
//!
//! The same workflows are scriptable through the `dualsrc` binary
//! (`gen | train-buy | train-coord | backtest | report`).

// comparisons written as !(x > 0.0) deliberately reject NaN alongside
// nonpositive values; parallel-array index loops mirror the weekly update
// structure
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

pub mod autodiff;
pub mod backtest;
pub mod cli;
pub mod coordinator;
pub mod datagen;
pub mod error;
pub mod mlp;
pub mod policies;
pub mod rng;
pub mod sim;
pub mod training;
pub mod world;

pub use error::{Error, Result};
