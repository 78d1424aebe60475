//! Command-line front end: TOML configuration, scan orchestration and
//! deterministic CSV / JSON export.

// Guards like `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, Command, RunArgs, RunSummary};
pub use error::CliError;
