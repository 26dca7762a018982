//! Configuration, execution and plotting behind the `levy-sync` command.

pub mod config;
pub mod error;
pub mod plot;
pub mod run;

pub use config::{parse_config, Experiment, RunConfig, SpecSection, SCHEMA};
pub use error::CliError;
pub use plot::{emit_plot, emit_plot_rows, PlotKind};
pub use run::{execute, run, RunStatus};

/// Environment variable overriding the number of worker threads.
pub const THREADS_ENV: &str = "LEVY_SYNC_THREADS";
