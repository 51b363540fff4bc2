//! Data ingestion, configuration, experiment pipelines and report output.

pub mod commands;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::{Experiment, PipelineConfig};
pub use pipeline::run_experiment;
pub use report::{emit_report, Curve, ReportBundle};
