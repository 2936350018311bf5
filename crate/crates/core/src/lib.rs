//! Multi-objective structural pruning of a small transformer encoder.
//!
//! The crate is organised bottom-up:
//!
//! - [`transformer`]: maskable encoder with exact gradients and Adam.
//! - [`space`]: the SMALL / LAYER / MEDIUM / LARGE search spaces.
//! - [`tasks`]: synthetic classification tasks.
//! - [`trainer`]: super-network training strategies and sub-network evaluation.
//! - [`pareto`]: dominance, sorting, normalisation, hypervolume and ranks.
//! - [`search`]: random search, local search, MO-REA, EHVI and MO-ASHA.
//! - [`harness`]: experiment orchestration, persistence and plot data.

pub mod error;
pub mod harness;
mod linalg;
pub mod pareto;
pub mod search;
pub mod space;
pub mod tasks;
pub mod trainer;
pub mod transformer;

pub use error::{Error, Result};
