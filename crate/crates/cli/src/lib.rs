//! Library side of the `mixea` command-line tool: configuration parsing,
//! the subcommands and report encoding.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{
    cmd_analyze, cmd_curve, cmd_design, cmd_simulate, FailureKind, Outcome, Status,
};
pub use config::ExperimentConfig;
pub use report::ReportBundle;
