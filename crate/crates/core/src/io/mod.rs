//! Data ingestion, result serialization, run configuration and the
//! command implementations behind the CLI.

mod config;
mod csvio;
mod run;

pub use config::{ColumnMap, CoverageConfig, EstimatorConfig, InputConfig, RunConfig, SimulateConfig};
pub use csvio::{
    ingest_csv, read_dataset, write_coverage_csv, write_dataset_csv, write_influence_csv, RESERVED_COLUMNS,
};
pub use run::{
    run_coverage, run_diagnose, run_estimate, run_simulate, DiagnoseReport, EstimateReport, Manifest, ReportDiagnostics,
    ToyDiagnostics,
};
