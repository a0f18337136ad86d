//! Batch front end for `mtlrrc`: configuration, ingestion, validation grid
//! search, simulation benchmarks and result files.

pub mod bench;
pub mod config;
pub mod error;
pub mod grid;
pub mod ingest;
pub mod run;

pub use bench::{bench, run_replicate, summarize, write_bench, BenchOutput, ReplicateRow, SummaryRow};
pub use config::{Cli, Method, Mode, RunConfig};
pub use error::{CliError, CliResult};
pub use grid::{grid_search, GridRow, GridSpec, SearchOutcome, SearchSettings};
pub use ingest::{ingest, prepare, Prepared};
pub use run::run;
