//! Batch experiment runner: config parsing, scenario orchestration, CSV
//! tables, and reproducibility manifests.

mod config;
mod manifest;
mod runner;
mod slope;

pub use slope::{fit_slope, SlopeFit};
