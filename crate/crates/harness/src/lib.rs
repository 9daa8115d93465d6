//! Experiment harness: configuration, runners and artifact writers behind
//! the `amp` command.

pub mod config;
pub mod experiment;
pub mod oracle;
pub mod output;
pub mod stats;
pub mod timing;
pub mod variance;
