//! File formats, model artifacts, run manifests and the command line for
//! [`beltwatch_core`].
//!
//! Datasets live in a directory holding `sensors.csv`, `events.csv` and
//! `provenance.json`. Trained and quantized model stacks are JSON
//! [`artifact::ModelArtifact`] files. Every command writes a
//! [`manifest::RunManifest`] next to its outputs.

pub mod artifact;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod metrics;

pub use error::{CliError, FormatError};
