//! Command-line harness for latent exploration decoding: toy-model runs,
//! synthetic benchmarks, ablations, offline analysis and the bridge server.

pub mod bridge;
pub mod commands;
pub mod config;
pub mod error;
pub mod metrics;
pub mod trace;

pub use error::{HarnessError, Result};
