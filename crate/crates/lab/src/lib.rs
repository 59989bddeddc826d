//! Experiment orchestration for weak-KAM and Birkhoff-recurrence checks.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod report;
pub mod svg;

pub use config::ExperimentConfig;
pub use error::LabError;
pub use report::{emit_reports, DiagnosticsRecord, ReportBundle, Verdict};
