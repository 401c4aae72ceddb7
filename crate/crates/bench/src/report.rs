//! CSV metrics report with a fixed column set.

use std::io::Write;

use auxlsm::pager::IoStats;
use auxlsm::workload::KeyDist;
use auxlsm::{CcMethod, Dataset, RepairMode, StrategyKind};
use serde::Serialize;

use crate::config::BenchConfig;

/// One measured phase. Field order is the CSV column order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Row {
    pub command: String,
    pub phase: String,
    pub strategy: String,
    pub repair: String,
    pub cc: String,
    pub opt: String,
    pub threads: usize,
    /// Operations applied so far in the run.
    pub records: u64,
    pub update_ratio: f64,
    pub dist: String,
    pub selectivity: Option<f64>,
    /// Operations or queries measured by this row.
    pub ops: u64,
    pub elapsed_ms: f64,
    pub ops_per_sec: f64,
    pub pages_read: u64,
    pub pages_scanned: u64,
    pub pages_written: u64,
    pub cache_hits: u64,
    pub bloom_tests: u64,
    pub components_primary: usize,
    pub components_pk: usize,
    pub components_secondary: usize,
    pub results: u64,
    pub wasted_fetches: u64,
    pub repair_ms: f64,
    pub mean_latency_ms: f64,
}

impl Row {
    pub fn new(command: &str, phase: &str, cfg: &BenchConfig) -> Row {
        Row {
            command: command.to_string(),
            phase: phase.to_string(),
            strategy: match cfg.strategy {
                StrategyKind::Eager => "eager",
                StrategyKind::Validation => "validation",
                StrategyKind::MutableBitmap => "mutable-bitmap",
            }
            .to_string(),
            repair: match cfg.repair {
                RepairMode::None => "none",
                RepairMode::Merge => "merge",
                RepairMode::Standalone => "standalone",
                RepairMode::MergeBloomOpt => "merge-bloom",
            }
            .to_string(),
            cc: match cfg.cc {
                CcMethod::Lock => "lock",
                CcMethod::SideFile => "sidefile",
            }
            .to_string(),
            opt: cfg.opt.to_string(),
            threads: cfg.threads,
            update_ratio: cfg.update_ratio,
            dist: match cfg.dist {
                KeyDist::Uniform => "uniform".to_string(),
                KeyDist::Zipf { theta } => format!("zipf({theta})"),
                KeyDist::Sequential => "seq".to_string(),
            },
            ..Row::default()
        }
    }

    pub fn io(mut self, io: &IoStats) -> Row {
        self.pages_read = io.pages_read;
        self.pages_scanned = io.pages_scanned;
        self.pages_written = io.pages_written;
        self.cache_hits = io.cache_hits;
        self.bloom_tests = io.bloom_tests;
        self
    }

    pub fn components(mut self, ds: &Dataset) -> Row {
        self.components_primary = ds.primary().disk_components().len();
        self.components_pk = ds.pk_index().disk_components().len();
        self.components_secondary = ds.secondaries().iter().map(|t| t.disk_components().len()).sum();
        self
    }

    pub fn timing(mut self, ops: u64, elapsed_ms: f64) -> Row {
        self.ops = ops;
        self.elapsed_ms = elapsed_ms;
        self.ops_per_sec = if elapsed_ms > 0.0 {
            ops as f64 * 1000.0 / elapsed_ms
        } else {
            0.0
        };
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<Row>,
}

impl MetricsReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Writes the header followed by every row. An empty report is a header
    /// line only.
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(header())?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Column names, in order.
pub fn header() -> Vec<&'static str> {
    vec![
        "command",
        "phase",
        "strategy",
        "repair",
        "cc",
        "opt",
        "threads",
        "records",
        "update_ratio",
        "dist",
        "selectivity",
        "ops",
        "elapsed_ms",
        "ops_per_sec",
        "pages_read",
        "pages_scanned",
        "pages_written",
        "cache_hits",
        "bloom_tests",
        "components_primary",
        "components_pk",
        "components_secondary",
        "results",
        "wasted_fetches",
        "repair_ms",
        "mean_latency_ms",
    ]
}
