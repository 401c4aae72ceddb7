//! Secondary-to-primary navigation, validation methods and filtered scans.

use std::collections::HashMap;

use crate::component::LookupCursor;
use crate::dataset::{Dataset, StrategyKind};
use crate::error::Result;
use crate::pager::IoStats;
use crate::record::{Record, Value};
use crate::tree::{LsmTree, ScanMode};
use crate::types::{ComponentId, FilterRange, IndexEntry, IndexKey, PrimaryKey, Timestamp};

/// Bytes charged per key against the batch budget: key plus handle.
pub const BATCH_KEY_BYTES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LookupOptions {
    pub batch_bytes: usize,
    pub batching: bool,
    pub stateful_cursor: bool,
    pub propagate_component_ids: bool,
    pub preserve_key_order: bool,
}

impl Default for LookupOptions {
    fn default() -> Self {
        LookupOptions {
            batch_bytes: 16 << 20,
            batching: true,
            stateful_cursor: true,
            propagate_component_ids: true,
            preserve_key_order: false,
        }
    }
}

impl LookupOptions {
    /// One key at a time, no cursor reuse, no id propagation.
    pub fn naive() -> Self {
        LookupOptions {
            batching: false,
            stateful_cursor: false,
            propagate_component_ids: false,
            ..LookupOptions::default()
        }
    }

    fn batch_len(&self) -> usize {
        if self.batching {
            (self.batch_bytes / BATCH_KEY_BYTES).max(1)
        } else {
            1
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueryMetrics {
    /// Pages fetched through the cache that missed.
    pub pages_read: u64,
    /// Pages read by sequential scans.
    pub pages_scanned: u64,
    pub cache_hits: u64,
    pub bloom_tests: u64,
    pub components_accessed: u64,
    /// Candidates fetched or validated that did not qualify.
    pub wasted_fetches: u64,
    pub candidates: u64,
}

impl QueryMetrics {
    fn add_io(&mut self, s: &IoStats) {
        self.pages_read += s.pages_read;
        self.pages_scanned += s.pages_scanned;
        self.cache_hits += s.cache_hits;
        self.bloom_tests += s.bloom_tests;
    }

    fn merge(&mut self, o: &QueryMetrics) {
        self.pages_read += o.pages_read;
        self.pages_scanned += o.pages_scanned;
        self.cache_hits += o.cache_hits;
        self.bloom_tests += o.bloom_tests;
        self.components_accessed += o.components_accessed;
        self.wasted_fetches += o.wasted_fetches;
        self.candidates += o.candidates;
    }

    /// Every page touched, cached lookups and scans alike.
    pub fn total_pages(&self) -> u64 {
        self.pages_read + self.pages_scanned
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult<T> {
    pub items: Vec<T>,
    pub metrics: QueryMetrics,
}

impl<T> Default for QueryResult<T> {
    fn default() -> Self {
        QueryResult {
            items: Vec::new(),
            metrics: QueryMetrics::default(),
        }
    }
}

/// Inclusive range over encoded secondary key bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyRange {
    pub lo: Vec<u8>,
    pub hi: Vec<u8>,
}

impl KeyRange {
    pub fn new(lo: impl Into<Vec<u8>>, hi: impl Into<Vec<u8>>) -> Self {
        KeyRange {
            lo: lo.into(),
            hi: hi.into(),
        }
    }

    pub fn exact(v: &Value) -> Self {
        KeyRange::new(v.key_bytes(), v.key_bytes())
    }

    pub fn int(lo: i64, hi: i64) -> Self {
        KeyRange::new(Value::Int(lo).key_bytes(), Value::Int(hi).key_bytes())
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.lo.as_slice() <= key && key <= self.hi.as_slice()
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }
}

/// One secondary index match.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecondaryHit {
    pub secondary: Vec<u8>,
    pub pk: PrimaryKey,
    pub ts: Timestamp,
    /// Component the entry came from; `None` for memory.
    pub source: Option<ComponentId>,
    pub source_repaired_ts: Timestamp,
}

/// A key to fetch, with the secondary component it was found in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FetchKey {
    pub pk: PrimaryKey,
    pub source: Option<ComponentId>,
}

impl From<PrimaryKey> for FetchKey {
    fn from(pk: PrimaryKey) -> Self {
        FetchKey { pk, source: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidationMethod {
    /// No validation; only sound for eagerly maintained indexes.
    None,
    Direct,
    Timestamp,
}

/// Outcome of one batched key probe against a tree.
#[derive(Clone, Debug)]
enum Probe {
    Found(IndexEntry),
    Invalidated,
}

impl Dataset {
    /// Reads the current version of one record.
    pub fn get(&self, key: impl Into<PrimaryKey>) -> Result<Option<Record>> {
        let key = key.into();
        let mut stats = IoStats::default();
        match self.primary().lookup(&IndexKey::primary(key), &mut stats)? {
            Some(f) if f.is_live() => Ok(Some(Record::decode(key, &f.entry.payload)?)),
            _ => Ok(None),
        }
    }

    /// All reconciled matter entries of secondary index `index` within
    /// `range`, honoring validity bitmaps.
    pub fn secondary_search(&self, index: usize, range: &KeyRange) -> Result<QueryResult<SecondaryHit>> {
        let tree = self.secondary(index)?;
        let mut res = QueryResult::default();
        if range.is_empty() {
            return Ok(res);
        }
        let lo = IndexKey::secondary(range.lo.clone(), PrimaryKey(0));
        let hi = IndexKey::secondary(range.hi.clone(), PrimaryKey(u64::MAX));
        let mut scan = tree.snapshot(Some(&lo), Some(&hi)).scan(ScanMode::Reconciled, true, |_, _| true);
        while let Some(item) = scan.next() {
            let item = item?;
            if item.entry.anti_matter {
                continue;
            }
            let origin = scan.origin(&item);
            let (source, source_repaired_ts) = match origin {
                Some(c) => (Some(c.id()), c.repaired_ts()),
                None => (None, Timestamp::NONE),
            };
            res.items.push(SecondaryHit {
                pk: item.entry.pk(),
                secondary: item.entry.key.secondary,
                ts: item.entry.ts,
                source,
                source_repaired_ts,
            });
        }
        res.metrics.pages_scanned = scan.pages_scanned();
        res.metrics.components_accessed = scan.components_accessed() as u64;
        Ok(res)
    }

    /// Fetches current records for `keys` in batches, probing components
    /// newest to oldest. Duplicates are fetched once.
    pub fn batched_fetch(&self, keys: &[FetchKey], opts: &LookupOptions) -> Result<QueryResult<Record>> {
        let mut res = QueryResult::default();
        let mut probes: Vec<(PrimaryKey, u64)> = Vec::new();
        for (pk, floor) in distinct_floors(keys, opts.propagate_component_ids) {
            probes.push((pk, floor));
        }
        let resolved = probe_tree(self.primary(), &probes, opts, &mut res.metrics)?;
        for (pk, probe) in resolved {
            if let Probe::Found(e) = probe {
                if !e.anti_matter {
                    res.items.push(Record::decode(pk, &e.payload)?);
                }
            }
        }
        if opts.preserve_key_order {
            res.items.sort_by_key(|r| r.key);
        }
        Ok(res)
    }

    /// Fetches every candidate and keeps records whose current secondary
    /// value still lies in `range`.
    pub fn query_direct_validation(
        &self,
        index: usize,
        range: &KeyRange,
        opts: &LookupOptions,
    ) -> Result<QueryResult<Record>> {
        let hits = self.secondary_search(index, range)?;
        let keys: Vec<FetchKey> = hits
            .items
            .iter()
            .map(|h| FetchKey {
                pk: h.pk,
                source: h.source,
            })
            .collect();
        let mut fetched = self.batched_fetch(&keys, opts)?;
        let distinct = distinct_floors(&keys, false).len() as u64;
        fetched
            .items
            .retain(|r| range.contains(&self.schema().secondary_key(index, r)));
        fetched.metrics.merge(&hits.metrics);
        fetched.metrics.candidates = distinct;
        fetched.metrics.wasted_fetches = distinct - fetched.items.len() as u64;
        Ok(fetched)
    }

    /// Keeps hits whose primary key has no newer timestamp in the primary
    /// key index. Components at or below a hit's repaired timestamp (or its
    /// own timestamp) cannot hold a newer version and are skipped.
    pub fn timestamp_validate(
        &self,
        hits: Vec<SecondaryHit>,
        opts: &LookupOptions,
        metrics: &mut QueryMetrics,
    ) -> Result<Vec<SecondaryHit>> {
        let mut floors: HashMap<PrimaryKey, u64> = HashMap::new();
        for h in &hits {
            let watermark = h.source_repaired_ts.max(h.ts).0;
            floors
                .entry(h.pk)
                .and_modify(|f| *f = (*f).min(watermark))
                .or_insert(watermark);
        }
        let mut probes: Vec<(PrimaryKey, u64)> = floors.into_iter().collect();
        probes.sort_unstable();
        let newest = probe_pk_newer(self.pk_index(), &probes, opts, metrics)?;
        let total = hits.len() as u64;
        let kept: Vec<SecondaryHit> = hits
            .into_iter()
            .filter(|h| match newest.get(&h.pk) {
                Some(Probe::Found(e)) => e.ts <= h.ts,
                Some(Probe::Invalidated) => false,
                None => true,
            })
            .collect();
        metrics.candidates += total;
        metrics.wasted_fetches += total - kept.len() as u64;
        Ok(kept)
    }

    pub fn query_timestamp_validation(
        &self,
        index: usize,
        range: &KeyRange,
        opts: &LookupOptions,
    ) -> Result<QueryResult<Record>> {
        let hits = self.secondary_search(index, range)?;
        let mut metrics = hits.metrics;
        let valid = self.timestamp_validate(hits.items, opts, &mut metrics)?;
        let keys: Vec<FetchKey> = valid
            .iter()
            .map(|h| FetchKey {
                pk: h.pk,
                source: h.source,
            })
            .collect();
        let mut fetched = self.batched_fetch(&keys, opts)?;
        metrics.merge(&fetched.metrics);
        fetched.metrics = metrics;
        Ok(fetched)
    }

    /// Index-only query: `(secondary key, primary key)` pairs.
    pub fn query_index_only(
        &self,
        index: usize,
        range: &KeyRange,
        method: ValidationMethod,
        opts: &LookupOptions,
    ) -> Result<QueryResult<(Vec<u8>, PrimaryKey)>> {
        let hits = self.secondary_search(index, range)?;
        let mut metrics = hits.metrics;
        let hits = match method {
            ValidationMethod::None => hits.items,
            ValidationMethod::Timestamp => self.timestamp_validate(hits.items, opts, &mut metrics)?,
            ValidationMethod::Direct => {
                return Err(crate::Error::Usage(
                    "direct validation must fetch records; index-only is unavailable".into(),
                ))
            }
        };
        Ok(QueryResult {
            items: hits.into_iter().map(|h| (h.secondary, h.pk)).collect(),
            metrics,
        })
    }

    /// Secondary range query returning records, validated as requested.
    pub fn query_secondary(
        &self,
        index: usize,
        range: &KeyRange,
        method: ValidationMethod,
        opts: &LookupOptions,
    ) -> Result<QueryResult<Record>> {
        match method {
            ValidationMethod::Direct => self.query_direct_validation(index, range, opts),
            ValidationMethod::Timestamp => self.query_timestamp_validation(index, range, opts),
            ValidationMethod::None => {
                let hits = self.secondary_search(index, range)?;
                let keys: Vec<FetchKey> = hits
                    .items
                    .iter()
                    .map(|h| FetchKey {
                        pk: h.pk,
                        source: h.source,
                    })
                    .collect();
                let mut fetched = self.batched_fetch(&keys, opts)?;
                fetched.metrics.merge(&hits.metrics);
                Ok(fetched)
            }
        }
    }

    /// Primary index scan restricted by the range filter, with the
    /// component selection each strategy's filters allow.
    pub fn filtered_scan(
        &self,
        filter: FilterRange,
        secondary: Option<(usize, &KeyRange)>,
    ) -> Result<QueryResult<Record>> {
        let snap = self.primary().snapshot(None, None);
        let hits: Vec<bool> = snap
            .disk
            .iter()
            .map(|c| c.range_filter().intersects(&filter))
            .collect();
        let memory_hit = snap.memory_filter.intersects(&filter);
        let (mode, with_memory, upto) = match self.strategy().kind {
            StrategyKind::Eager => (ScanMode::Reconciled, memory_hit, None),
            StrategyKind::Validation => {
                let oldest = hits.iter().rposition(|&h| h);
                (ScanMode::Reconciled, memory_hit || oldest.is_some(), Some(oldest))
            }
            StrategyKind::MutableBitmap => (ScanMode::Independent, memory_hit, None),
        };
        let mut scan = snap.scan(mode, with_memory, |i, _| match upto {
            Some(oldest) => oldest.is_some_and(|o| i <= o),
            None => hits[i],
        });
        let mut res = QueryResult::default();
        while let Some(item) = scan.next() {
            let item = item?;
            if item.entry.anti_matter {
                continue;
            }
            let rec = Record::decode(item.entry.pk(), &item.entry.payload)?;
            let in_filter = match self.schema().extract_filter_key(&rec)? {
                Some(v) => filter.contains(v),
                None => true,
            };
            let in_secondary = match secondary {
                Some((i, r)) => r.contains(&self.schema().secondary_key(i, &rec)),
                None => true,
            };
            if in_filter && in_secondary {
                res.items.push(rec);
            }
        }
        res.metrics.pages_scanned = scan.pages_scanned();
        res.metrics.components_accessed = scan.components_accessed() as u64;
        Ok(res)
    }
}

/// Sorted distinct keys, each with the lowest source `min_ts` it was seen
/// with (0 disables pruning for that key).
fn distinct_floors(keys: &[FetchKey], propagate: bool) -> Vec<(PrimaryKey, u64)> {
    let mut v: Vec<(PrimaryKey, u64)> = keys
        .iter()
        .map(|k| {
            let floor = match (propagate, k.source) {
                (true, Some(id)) => id.min_ts.0,
                _ => 0,
            };
            (k.pk, floor)
        })
        .collect();
    v.sort_unstable();
    v.dedup_by_key(|(pk, _)| *pk);
    v
}

/// Resolves each `(key, floor)` in a tree: memory first, then disk
/// components newest to oldest, skipping components whose `max_ts` is below
/// the key's floor. Batches end when every key is resolved.
fn probe_tree(
    tree: &LsmTree,
    probes: &[(PrimaryKey, u64)],
    opts: &LookupOptions,
    metrics: &mut QueryMetrics,
) -> Result<Vec<(PrimaryKey, Probe)>> {
    probe_batches(tree, probes, opts, metrics, |c, floor| c.id().max_ts.0 < floor)
}

/// Newest primary key index entry per key among components that may hold a
/// version newer than the key's watermark.
fn probe_pk_newer(
    tree: &LsmTree,
    probes: &[(PrimaryKey, u64)],
    opts: &LookupOptions,
    metrics: &mut QueryMetrics,
) -> Result<HashMap<PrimaryKey, Probe>> {
    let found = probe_batches(tree, probes, opts, metrics, |c, watermark| {
        c.id().max_ts.0 <= watermark
    })?;
    Ok(found.into_iter().collect())
}

fn probe_batches(
    tree: &LsmTree,
    probes: &[(PrimaryKey, u64)],
    opts: &LookupOptions,
    metrics: &mut QueryMetrics,
    prunable: impl Fn(&crate::component::DiskComponent, u64) -> bool,
) -> Result<Vec<(PrimaryKey, Probe)>> {
    let mut out = Vec::new();
    let mut stats = IoStats::default();
    for batch in probes.chunks(opts.batch_len()) {
        let keys: Vec<IndexKey> = batch.iter().map(|(pk, _)| IndexKey::primary(*pk)).collect();
        let (mem, disk) = tree.memory_probe_and_pin(&keys);
        let mut pending: Vec<usize> = Vec::new();
        for (i, hit) in mem.into_iter().enumerate() {
            match hit {
                Some(e) => out.push((batch[i].0, Probe::Found(e))),
                None => pending.push(i),
            }
        }
        for c in disk.iter() {
            // a key whose floor excludes this component excludes all older ones
            pending.retain(|&i| !prunable(c, batch[i].1));
            if pending.is_empty() {
                break;
            }
            metrics.components_accessed += 1;
            let mut cursor = LookupCursor::new();
            let mut still = Vec::with_capacity(pending.len());
            for &i in &pending {
                let cur = opts.stateful_cursor.then_some(&mut cursor);
                match c.point_lookup(&keys[i], cur, &mut stats)? {
                    Some((ord, e)) => {
                        let probe = if c.bitmap_is_valid(ord)? {
                            Probe::Found(e)
                        } else {
                            Probe::Invalidated
                        };
                        out.push((batch[i].0, probe));
                    }
                    None => still.push(i),
                }
            }
            pending = still;
        }
    }
    metrics.add_io(&stats);
    Ok(out)
}
