//! File formats, reports, batch processing and the command-line interface
//! around [`emdens_core`].

pub mod batch;
pub mod benchmark;
pub mod cli;
mod error;
pub mod io;
pub mod model_io;
pub mod pipeline;
pub mod report;

pub use emdens_core as core;
pub use error::{exit, Error, Result};
