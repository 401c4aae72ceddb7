//! The four bench commands.

use std::thread;
use std::time::Instant;

use auxlsm::oracle::{verify, Oracle, VerifyPlan};
use auxlsm::repair;
use auxlsm::workload::{gen_query_set, gen_stream, Operation, Tweet};
use auxlsm::{Dataset, FilterRange, KeyRange, PrimaryKey, StrategyKind};
use tempfile::TempDir;

use crate::config::{core_error, BenchConfig, ConfigError};
use crate::report::{MetricsReport, Row};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(auxlsm::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("worker thread panicked")]
    Worker,
}

impl From<auxlsm::Error> for BenchError {
    fn from(e: auxlsm::Error) -> Self {
        match e {
            auxlsm::Error::Config { .. } => BenchError::Config(core_error(e)),
            other => BenchError::Engine(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;

/// A dataset plus the temporary directory backing it, if any.
pub struct Session {
    pub ds: Dataset,
    _tmp: Option<TempDir>,
}

pub fn open(cfg: &BenchConfig) -> Result<Session> {
    cfg.validate()?;
    let (root, tmp) = match &cfg.dir {
        Some(d) => (d.clone(), None),
        None => {
            let t = tempfile::Builder::new().prefix("auxlsm-bench").tempdir()?;
            (t.path().to_path_buf(), Some(t))
        }
    };
    let ds = Dataset::create(cfg.dataset_config(&root))?;
    Ok(Session { ds, _tmp: tmp })
}

fn millis(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

/// Applies a chunk of operations. With several threads, operations are
/// partitioned by key so each key's operations keep their order.
fn apply_chunk(ds: &Dataset, chunk: &[Operation], threads: usize) -> Result<u64> {
    if threads <= 1 {
        let mut applied = 0;
        for op in chunk {
            applied += ds.apply_operation(op)? as u64;
        }
        return Ok(applied);
    }
    let counts: Vec<Result<u64>> = thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                s.spawn(move || {
                    let mut applied = 0;
                    for op in chunk.iter().filter(|op| op.key().0 % threads as u64 == t as u64) {
                        applied += ds.apply_operation(op)? as u64;
                    }
                    Ok(applied)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or(Err(BenchError::Worker)))
            .collect()
    });
    counts.into_iter().sum()
}

/// Replays the configured workload in chunks of `chunk` operations, adding
/// one `ingest` row per chunk and calling `after` with the running count.
fn replay(
    cfg: &BenchConfig,
    ds: &Dataset,
    command: &str,
    chunk: u64,
    report: &mut MetricsReport,
    mut after: impl FnMut(u64, &mut MetricsReport) -> Result<()>,
) -> Result<()> {
    let mut ops = gen_stream(&cfg.workload())?;
    let mut done = 0u64;
    loop {
        let batch: Vec<Operation> = ops.by_ref().take(chunk as usize).collect();
        if batch.is_empty() {
            return Ok(());
        }
        let before = ds.cache().totals();
        let started = Instant::now();
        let applied = apply_chunk(ds, &batch, cfg.threads)?;
        let elapsed = millis(started);
        done += batch.len() as u64;
        let mut row = Row::new(command, "ingest", cfg)
            .io(&ds.cache().totals().delta(&before))
            .components(ds)
            .timing(batch.len() as u64, elapsed);
        row.records = done;
        row.results = applied;
        report.rows.push(row);
        after(done, report)?;
    }
}

fn progress_chunk(cfg: &BenchConfig) -> u64 {
    (cfg.records / 10).max(1)
}

/// Ingests the workload, reporting every tenth of the stream.
pub fn cmd_ingest(cfg: &BenchConfig) -> Result<MetricsReport> {
    let s = open(cfg)?;
    let mut report = MetricsReport::default();
    replay(cfg, &s.ds, "ingest", progress_chunk(cfg), &mut report, |_, _| Ok(()))?;
    Ok(report)
}

/// Loads the workload, then runs `queries_per_selectivity` secondary range
/// queries per selectivity. One row per selectivity.
pub fn cmd_query(cfg: &BenchConfig) -> Result<MetricsReport> {
    let s = open(cfg)?;
    let ds = &s.ds;
    replay(cfg, ds, "query", progress_chunk(cfg), &mut MetricsReport::default(), |_, _| Ok(()))?;
    let opts = cfg.lookup_options();
    let mut report = MetricsReport::default();
    for (i, &sel) in cfg.selectivities.iter().enumerate() {
        let ranges = gen_query_set(sel, cfg.queries_per_selectivity, cfg.seed.wrapping_add(i as u64))?;
        let before = ds.cache().totals();
        let started = Instant::now();
        let (mut results, mut wasted) = (0, 0);
        for (lo, hi) in ranges {
            if cfg.cold_cache {
                ds.cache().clear();
            }
            let range = KeyRange::int(lo, hi);
            if cfg.index_only {
                let r = ds.query_index_only(0, &range, cfg.validation, &opts)?;
                results += r.items.len() as u64;
                wasted += r.metrics.wasted_fetches;
            } else {
                let r = ds.query_secondary(0, &range, cfg.validation, &opts)?;
                results += r.items.len() as u64;
                wasted += r.metrics.wasted_fetches;
            }
        }
        let elapsed = millis(started);
        let n = cfg.queries_per_selectivity as u64;
        let mut row = Row::new("query", "query", cfg)
            .io(&ds.cache().totals().delta(&before))
            .components(ds)
            .timing(n, elapsed);
        row.records = cfg.records;
        row.selectivity = Some(sel);
        row.results = results;
        row.wasted_fetches = wasted;
        row.mean_latency_ms = if n > 0 { elapsed / n as f64 } else { 0.0 };
        report.rows.push(row);
    }
    Ok(report)
}

/// Ingests the workload and runs a full standalone repair of every
/// secondary index after each `repair_interval` records.
pub fn cmd_repair(cfg: &BenchConfig) -> Result<MetricsReport> {
    if cfg.strategy != StrategyKind::Validation {
        return Err(ConfigError {
            field: "strategy".into(),
            reason: "repair runs only under the validation strategy".into(),
        }
        .into());
    }
    let s = open(cfg)?;
    let ds = &s.ds;
    let mut report = MetricsReport::default();
    replay(cfg, ds, "repair", cfg.repair_every(), &mut report, |done, report| {
        let started = Instant::now();
        let stats = repair::repair_all(ds)?;
        let elapsed = millis(started);
        let mut io = auxlsm::pager::IoStats::default();
        for st in &stats {
            io.add(&st.pk_io);
        }
        let mut row = Row::new("repair", "repair", cfg)
            .io(&io)
            .components(ds)
            .timing(stats.len() as u64, elapsed);
        row.records = done;
        row.results = stats.iter().map(|s| s.invalid).sum();
        row.repair_ms = elapsed;
        report.rows.push(row);
        Ok(())
    })?;
    Ok(report)
}

#[derive(Debug)]
pub struct VerifyOutcome {
    pub report: MetricsReport,
    /// Empty when the engine matched the oracle everywhere.
    pub mismatches: Vec<String>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn verify_plan(cfg: &BenchConfig, oracle: &Oracle) -> Result<VerifyPlan> {
    let live: Vec<PrimaryKey> = oracle.keys().collect();
    let step = (live.len() / 2000).max(1);
    let mut keys: Vec<PrimaryKey> = live.iter().step_by(step).copied().collect();
    // neighbours of live keys are almost always absent
    keys.extend(live.iter().step_by(step * 10).map(|k| PrimaryKey(k.0.wrapping_add(1))));
    let mut ranges = Vec::new();
    for (i, &sel) in cfg.selectivities.iter().enumerate() {
        for (lo, hi) in gen_query_set(sel, 2, cfg.seed.wrapping_add(i as u64))? {
            ranges.push((0, KeyRange::int(lo, hi)));
        }
    }
    let n = cfg.records as i64;
    Ok(VerifyPlan {
        keys,
        ranges,
        filters: vec![
            FilterRange::new(0, n / 20),
            FilterRange::new(n / 3, n / 2),
            FilterRange::new(n - n / 10, n),
            FilterRange::new(i64::MIN, i64::MAX),
        ],
        lookup: vec![cfg.lookup_options(), auxlsm::LookupOptions::naive()],
    })
}

/// Replays the workload into the engine and an oracle, then diffs every
/// query path before and after a final flush and merge.
pub fn cmd_verify(cfg: &BenchConfig) -> Result<VerifyOutcome> {
    let mut cfg = cfg.clone();
    // determinism: the oracle sees operations in stream order
    cfg.threads = 1;
    let s = open(&cfg)?;
    let ds = &s.ds;
    let mut oracle = Oracle::new(Tweet::schema());
    let mut mismatches = Vec::new();
    let started = Instant::now();
    for op in gen_stream(&cfg.workload())? {
        let got = ds.apply_operation(&op)?;
        let want = oracle.apply(&op);
        if matches!(op, Operation::Insert(_)) && got != want && mismatches.is_empty() {
            mismatches.push(format!("insert of key {} returned {got}, oracle {want}", op.key().0));
        }
    }
    let plan = verify_plan(&cfg, &oracle)?;
    mismatches.extend(verify(ds, &oracle, &plan)?);
    ds.settle()?;
    mismatches.extend(verify(ds, &oracle, &plan)?.into_iter().map(|m| format!("after settle: {m}")));
    let mut row = Row::new("verify", "verify", &cfg).components(ds).timing(cfg.records, millis(started));
    row.records = cfg.records;
    row.results = mismatches.len() as u64;
    Ok(VerifyOutcome {
        report: MetricsReport { rows: vec![row] },
        mismatches,
    })
}
