//! Command-line front end: file formats, the two-stage scan and the
//! evaluation subcommands.

pub mod cli;
pub mod commands;
pub mod error;
pub mod gwas;
pub mod input;

pub use error::{CliError, Result};
