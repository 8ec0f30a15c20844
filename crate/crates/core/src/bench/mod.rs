//! Benchmark harness: datasets, run matrices, the results store,
//! aggregation and report rendering.

pub mod aggregate;
pub mod dataset;
pub mod matrix;
pub mod report;
pub mod result;
pub mod store;

pub use aggregate::{aggregate, AggregateReport, Cell, CellKey, CellStats};
pub use dataset::{load_dataset, Dataset, DatasetError};
pub use matrix::{run_matrix, MatrixError, MatrixOptions, MatrixSummary, NamedBackend, RunMatrix};
pub use report::{emit_report, ReportFormat};
pub use result::{CellId, ItemRun, RunResult};
pub use store::{ResultStore, StoreError};
