//! Batch driver for kicked-top experiments: configuration, the stages that
//! turn a configuration into CSV files, and the run manifest.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
mod error;
pub mod manifest;
pub mod output;
pub mod pipeline;
pub mod presets;

pub use config::{ExperimentConfig, Overrides};
pub use error::CliError;
pub use manifest::RunManifest;
pub use pipeline::{Outputs, Runner};
