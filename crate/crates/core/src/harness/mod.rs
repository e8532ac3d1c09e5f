//! Batch evaluation: manifests, per-case runs, summaries, reader
//! simulation and reports.

pub mod manifest;
pub mod readers;
pub mod report;
pub mod run;
pub mod summary;

pub use manifest::{CaseEntry, CaseManifest, LoadedCase};
pub use readers::{
    inter_operator_variability, simulate_readers, JitterConfig, ReaderMeasurement, ReaderMode, Variability,
};
pub use report::emit_report;
pub use run::{run_all, run_case, CaseResult, Mode, RunConfig};
pub use summary::{summarize, GroupBy, RunSummary};
