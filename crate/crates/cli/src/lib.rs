//! Library surface of the `rlul` command-line workbench: configuration,
//! checkpoint persistence, CSV report writing, and the command
//! implementations the binary dispatches to.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csv_out;
