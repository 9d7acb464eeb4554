//! Scenario configuration, execution and reporting behind the
//! `bsde-order` binary.

pub mod config;
pub mod golden;
pub mod report;
pub mod scenario;

pub use config::{CheckerConfig, ConditionKind, ConfigError, GeneratorSpec, OrderConfig, ScenarioConfig};
pub use golden::{reproduce_examples, GoldenCase, GoldenReport};
pub use report::{emit_tables, Check, RunReport, Tables};
pub use scenario::{run_examples, run_scenario, CliError, Command};
