//! Benchmark harness for accelerated MRI reconstruction.
//!
//! Simulates phantom corpora, runs zero-filled and compressed-sensing
//! reconstructions over a declarative plan, scores external reconstructions
//! against the same ground truths and renders the results as tables.

pub mod corpus;
pub mod error;
pub mod plan;
pub mod report;
pub mod run;
pub mod seeds;
pub mod table;

pub use corpus::{list_volumes, mask_corpus, simulate, CorpusConfig, GeneratedVolumes, VolumeSpec};
pub use error::{BenchError, Result};
pub use plan::{Cell, ExperimentPlan, Metric};
pub use report::{emit_all, emit_report, load_table, ReportFormat};
pub use run::{read_records, run_plan, score_external, ExternalRun, RunOutput};
pub use table::{Failure, Method, ResultTable, TableRow, VolumeResult};
