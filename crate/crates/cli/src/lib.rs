//! File formats, checkpoints and the command implementations behind the
//! `crowdtruth` binary.

pub mod args;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, Result};
