//! Workloads, experiments and the oracles that judge them.

pub mod aba;
pub mod conformance;
pub mod explore;
pub mod footprint;
pub mod linearizability;
pub mod metrics;
pub mod runner;
pub mod safety;
pub mod workload;

pub use footprint::{check_footprint, footprint_experiment, FootprintCheck};
pub use metrics::{parse_csv, write_csv, MetricsLog, CSV_HEADER};
pub use runner::{run_benchmark, BenchConfig, BenchOutcome};
pub use safety::{run_one, run_suite, SafetyConfig, SafetySummary};
pub use workload::Workload;
