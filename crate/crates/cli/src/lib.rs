//! Library behind the `markloc` binary: every subcommand is a plain function
//! so tests and benches can call it without spawning a process.

pub mod error;
pub mod evaluate;
pub mod files;
pub mod formats;
pub mod generate;
pub mod locate;
pub mod stats;
pub mod suite;
pub mod sweep;

pub use error::{CliError, Result};
