//! File formats, configuration, parallel Monte Carlo and the command-line
//! front end for `staggerspill-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod mc;
pub mod network_io;
pub mod output;
pub mod panel_io;

pub use staggerspill_core as core;
pub use error::{CliError, ErrorKind};
