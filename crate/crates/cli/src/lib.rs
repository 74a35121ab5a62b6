//! Workflows behind the `suwr` binary: dataset generation, training,
//! evaluation, Pareto fronts, leakage audits and narrative inference.

pub mod commands;
pub mod config;
mod error;
pub mod svg;

pub use commands::{run, Checkpoint, Outcome};
pub use config::RunConfig;
pub use error::{CliError, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_VIOLATION};
