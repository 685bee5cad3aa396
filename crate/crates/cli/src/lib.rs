//! Command-line runs for borderlab: simulation, estimation, synthetic
//! control and the full staged pipeline, all driven by one TOML config.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod run;

pub use config::{RunConfig, Sector};
pub use pipeline::{run_pipeline, Manifest, PipelineReport, StageStatus, STAGES};
pub use report::{Format, Table};
pub use run::CommandOutput;
