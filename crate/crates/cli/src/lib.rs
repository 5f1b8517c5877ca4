//! Experiment harness for fast-slow test-time adaptation on the synthetic
//! navigation benchmark: pretraining, strategy sweeps, the forgetting
//! protocol and result comparison.

pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;
pub mod results;

pub use compare::{compare, Comparison};
pub use config::{RunConfig, StreamKind};
pub use error::{HarnessError, Result};
pub use experiment::{cmd_forgetting, cmd_pretrain, cmd_run, ForgettingRow, RunOutput};
pub use results::{read_results, ResultRow, SCHEMA_VERSION};
