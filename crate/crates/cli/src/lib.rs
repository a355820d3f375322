//! The `msfs` command-line tool as a library, so the subcommands and the
//! grid runner can be driven in-process.

pub mod bench;
pub mod cli;
pub mod commands;
pub mod error;
pub mod input;
pub mod pipeline;

pub use commands::run;
pub use error::{CliError, CliResult, EXIT_IO, EXIT_OK, EXIT_SOLVER, EXIT_USAGE};
