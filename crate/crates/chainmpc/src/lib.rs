//! File formats, a threaded agent runtime and the command implementations
//! behind the `chainmpc` binary.

pub mod commands;
pub mod error;
pub mod formats;
pub mod runner;

pub use chainmpc_core;
pub use error::{CliError, CliResult};
