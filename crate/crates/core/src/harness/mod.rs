//! Corpus ingestion, experiment configuration, the benchmark matrix and
//! report emission.

pub mod config;
pub mod corpus;
pub mod matrix;
pub mod report;

pub use config::ExperimentConfig;
pub use corpus::{ingest_corpus, ingest_text, Corpus};
pub use matrix::{run_matrix, CellKey, Domain, Experiment, RunRecord, RunStats};
pub use report::{emit_report, write_timings, Report, ReportFormat};
