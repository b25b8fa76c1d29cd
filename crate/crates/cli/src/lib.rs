//! Library surface of the simulator CLI: configuration, the experiment
//! runner with CSV emission, and the built-in verification suites. The
//! binary in `main.rs` is a thin argument parser over these.

pub mod config;
pub mod csv;
pub mod runner;
pub mod verify;

pub use config::{ConfigError, NoiseChoice, RunConfig};
pub use runner::{run_config, RunSummary};
pub use verify::{run_suite, Check, SuiteReport, SUITES};
