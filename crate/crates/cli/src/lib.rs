//! Front end for `perishape`: configuration parsing, run execution and artifact output.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, parse_str, Command, ConfigError, RunConfig};
pub use run::{run, Outcome, RunError};
