//! Configuration, CSV ingestion and export, report and plot-data output.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod plot;
pub mod report;

pub use config::{parse_config, parse_config_with_overrides, RunConfig};
pub use ingest::{ingest_caps_csv, ingest_with_covariance, write_caps_csv, write_covariance_csv};
pub use plot::{emit_plot_data, PlotKind};
pub use report::{emit_report, ReportFormat};
