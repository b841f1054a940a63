//! Configuration, sweep orchestration and report emission for `pq-spectra`.

pub mod config;
pub mod report;
pub mod sweep;

pub use config::{parse_config, parse_config_str, ConfigError, LambdaGrid, RunPlan};
pub use report::{emit_outputs, emit_threshold, read_field, ReportError};
pub use sweep::{compute_threshold, run_sweep, Status, SweepError, SweepReport, SweepRow};
