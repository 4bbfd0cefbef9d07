//! File formats, plots and the end-to-end workflow around `wardcast-core`.
//!
//! Every subcommand of the `wardcast` binary is a function in [`pipeline`]
//! that reads directories written by earlier steps and writes its own
//! directory with a manifest of hashed files.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod plot;

pub use config::RunConfig;
pub use error::{CliError, Result};
