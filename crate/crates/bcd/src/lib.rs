//! Experiment runner for layer-wise block coordinate descent: synthetic
//! data, run configs, loss traces, checkpoints, gradient checks and the
//! pinned experiment suites behind the `bcd` binary.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod run;
pub mod suite;
pub mod tracefile;

pub use error::{CliError, Result};
