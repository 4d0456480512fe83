//! Command-line harness: configuration, experiment directories, tensor
//! files, frame dumps, plots and sweeps.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod frames;
pub mod fsutil;
pub mod manifest;
pub mod plots;
pub mod tensor_file;

pub use config::{ExperimentConfig, Overrides};
pub use error::{FormatError, HarnessError, Result};
pub use manifest::{Artifact, ExperimentDir, Job, Manifest, Role};
pub use tensor_file::Tensor;
