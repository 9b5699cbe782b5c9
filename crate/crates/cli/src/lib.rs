//! Experiment driver for the mixture projection filter: scenario files, engine
//! runs with CSV output, cross-engine comparison and metric checks.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod config;
pub mod error;
pub mod metrics;
pub mod run;

pub use config::{parse_scenario, parse_scenario_str, Engine, Mode, Preset, Scenario};
pub use error::{CliError, EXIT_NUMERIC, EXIT_VALIDATION};
pub use run::{execute, RunReport};
