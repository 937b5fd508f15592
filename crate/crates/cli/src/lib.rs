//! Command-line front end for delay-only training: configuration,
//! checkpoints, the epoch loop, and the report formatting used by the
//! `delay-snn` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod run;

pub use checkpoint::Checkpoint;
pub use config::{ConfigArgs, Dataset, InitScheme, RunConfig};
pub use error::{CliError, Result};
pub use run::{train, EpochMetrics, TrainData, TrainOutcome};
