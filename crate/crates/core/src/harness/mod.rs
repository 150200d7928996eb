//! Declarative experiments: configuration, execution and reporting.

mod cells;
mod config;
mod report;
mod run;

pub use cells::{dyadic_ks, family_for, measure};
pub use config::{Condition, ExperimentConfig, FamilyConfig, DEFAULT_OUTPUT_DIR, MIN_SAMPLE_COUNT, OUTPUT_DIR_ENV, SCHEMA_VERSION};
pub use report::{load_ledgers, render_report, summary_table};
pub use run::{run_experiment, write_atomic, CellReport, Provenance, RunReport};
