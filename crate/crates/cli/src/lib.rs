//! Batch front end: scenario configs in, snapshots, series, reports and manifests out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod model;
pub mod output;
pub mod verify;

pub use commands::{run, Command, Context, Outcome};
pub use config::{parse_config, ScenarioConfig};
pub use error::{CliError, Result};

/// Exit status for a completed run whose tolerances held.
pub const EXIT_PASS: i32 = 0;
/// Exit status for a crash, an invalid config or an I/O failure.
pub const EXIT_ERROR: i32 = 1;
/// Exit status for a completed run that violated a declared tolerance.
pub const EXIT_TOLERANCE: i32 = 2;
