//! File formats and command-line front end for the `xport-core` simulator
//! and chain checker.

pub mod cli;
pub mod config;
pub mod domain;
pub mod output;
pub mod scenarios;
