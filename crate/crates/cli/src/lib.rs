//! Pipeline commands behind the `cnndistill` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_analyze, cmd_distill, cmd_report, cmd_synth, cmd_train, DistillOutcome, TrainSummary};
pub use config::{CnnSettings, DatasetSpec, Overrides, RunConfig, Sweep};
pub use error::{CliError, CliResult};
