//! Experiment orchestration: configuration, trial runs, sweeps, query files
//! and result export.

mod config;
mod export;
mod ingest;
mod run;
mod sweep;

pub use config::{
    ActivationKind, ActivationSection, ConvergenceSection, ExperimentConfig, OutputFormat, OutputSection,
    Problem, RunSection, Sizes, SweepAxis, SweepVariable,
};
pub use export::{read_csv, read_jsonl, write_csv, write_json, write_jsonl, CsvRow, Provenance, CSV_COLUMNS};
pub use ingest::{format_queries, ingest_queries, parse_queries, write_queries, LabeledQuery, QueryFile};
pub use run::{run_queries, run_trials, run_trials_on, TrialRecord, TrialSummary};
pub use sweep::{
    ablation_suite, capacity_sweep, noise_sweep, run_sweep, AblationPlan, AblationRow, CapacityReport,
    SweepPoint, CAPACITY_ACCURACY,
};
