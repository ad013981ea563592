//! File formats, dataset IO and the command-line driver around
//! [`freqspoof_core`].
//!
//! - [`fstn`]: the binary tensor format.
//! - [`image_io`]: 8-bit PNG frames.
//! - [`dataset`]: frame directories, manifests and toy-dataset export.
//! - [`checkpoint`]: model directories of FSTN tensors plus a text manifest.
//! - [`config`]: `key=value` run configuration.
//! - [`report`]: scores CSV, metric reports, ROC dumps and training logs.
//! - [`cli`]: the `freqspoof` executable.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fstn;
pub mod image_io;
pub mod report;

pub use error::{Error, Result};
