//! File formats, run configuration and the command-line front end for
//! `stepcast-core`.

pub mod artifacts;
pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{Error, Result};
