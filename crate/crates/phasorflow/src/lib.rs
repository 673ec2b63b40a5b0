//! File formats, parallel orchestration and the `phasorflow` command line
//! on top of [`phasorflow_core`].

pub mod cli;
pub mod error;
pub mod io;
pub mod mods;
pub mod montecarlo;
pub mod output;
pub mod scenario;
pub mod schema;

pub use error::{Error, Result};
pub use phasorflow_core as core;
