//! File formats, configuration, the Monte Carlo harness and the command-line
//! front end around `dml4ssi-core`.

pub mod cli;
pub mod config;
pub mod harness;
pub mod number;
pub mod presets;
pub mod report;
pub mod trajectory_csv;

pub use dml4ssi_core as estimation;
