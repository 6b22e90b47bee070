//! The `forgenet` command line: dataset generation, training, prediction,
//! evaluation under OSN degradation, timing and charts.

pub mod bench;
pub mod chart;
pub mod commands;

pub use commands::{run, Cli, Command};
