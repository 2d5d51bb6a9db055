//! Configuration, sweep tables and report plumbing for the `sloppy` tool.

pub mod check;
pub mod config;
pub mod records;
pub mod report;
pub mod runner;
