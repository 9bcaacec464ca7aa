//! Experiment harness and file output for the diffusive wave inversion.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod output;
pub mod props;
