//! Experiment harness: field library, configuration, drivers and CSV output.

pub mod config;
pub mod experiments;
pub mod fields;
pub mod hp;
pub mod report;

pub use config::ExperimentConfig;
pub use experiments::{estimate_rate, run};
pub use report::{Report, Row, Status};
