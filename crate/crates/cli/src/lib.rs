//! Driver for the `weakfock` binary: configuration, subcommands, reports.

pub mod config;
pub mod report;
pub mod run;
