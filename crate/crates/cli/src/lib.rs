//! File formats, configuration and experiment drivers behind the `effrank`
//! command.

pub mod config;
pub mod error;
pub mod experiments;
pub mod formats;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
