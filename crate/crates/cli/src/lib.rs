//! Experiment orchestration for the `anyplay` binary.

pub mod app;
pub mod config;
pub mod experiment;
pub mod report;
