//! File formats, experiment sweeps and the `kffnn` command-line tool built
//! on [`kffnn_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod jsonl;
pub mod model_io;
pub mod sweep;
pub mod system;

pub use error::{Error, Result};
