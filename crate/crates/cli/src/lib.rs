//! Experiment orchestration for the `msfl` command: configuration parsing,
//! parameter sweeps with CSV run logs, summary comparison and the named
//! check suite.

pub mod check;
pub mod compare;
pub mod config;
pub mod constants;
pub mod error;
pub mod runlog;
pub mod sweep;
pub mod task;

pub use error::{CliError, Result};
