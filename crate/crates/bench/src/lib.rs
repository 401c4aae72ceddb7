//! Benchmark harness: configures a dataset, replays generated workloads,
//! runs query suites and reports instrumented metrics as CSV.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{cmd_ingest, cmd_query, cmd_repair, cmd_verify, BenchError, VerifyOutcome};
pub use config::{BenchConfig, ConfigError, Optimizations};
pub use report::{MetricsReport, Row};
