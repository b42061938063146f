//! Configuration, seeded execution and CSV output for the tabular
//! exploration studies built on `made-core`.

pub mod config;
pub mod experiments;
pub mod output;
pub mod plot;

pub use config::{parse_config, parse_config_str, parse_resolved_json, ConfigError, ExperimentConfig, ExperimentKind};
pub use experiments::{run_experiment, Report};
