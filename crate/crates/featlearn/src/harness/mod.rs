//! Config-driven experiment runner behind the command line interface.

pub mod config;
pub mod runner;
pub mod svg;
pub mod table;

pub use config::{resolve, resolve_out_dir, ExperimentConfig, ExperimentKind, ResolvedPlan};
pub use runner::{
    render_report, replot, report_thresholds, run_experiment, ExperimentReport, ReportBody,
};
pub use table::{assert_thresholds, Method, MethodTable, Threshold};
