//! Std companion of `latent-demand-core`: parallel batches, parameter files, CSV and JSON
//! outputs, figure datasets and the `ldm` command line.

pub mod cli;
pub mod commands;
pub mod config;
pub mod figures;
pub mod io;
pub mod manifest;
pub mod parallel;

pub use commands::{run, Command, Outcome};
pub use config::{parse_param_file, ParamFile, ScenarioConfig};
