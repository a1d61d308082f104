//! Command-line front end: argument parsing, summaries, JSON fit files
//! and SVG plots.

pub mod args;
pub mod commands;
pub mod document;
pub mod error;
pub mod plot;
pub mod report;

pub use args::Cli;
pub use commands::run;
pub use document::{FitDocument, SCHEMA_VERSION};
pub use error::{CliError, Result};
