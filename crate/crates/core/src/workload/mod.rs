//! Trace ingestion, synthetic workloads and block-type analysis.

mod generate;
mod trace;
mod types;

pub use generate::{generate, Generator, WorkloadClass, WorkloadProfile, HOT_VISIT_SHARE};
pub use trace::{
    open_trace, parse_line, write_binary, write_csv, BinaryReader, CsvReader, TraceRecord,
    BINARY_MAGIC, BINARY_VERSION, CSV_HEADER,
};
pub use types::{analyze_types, TypeAnalyzer, TypeSummary};
