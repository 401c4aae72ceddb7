//! Cleanup of stale secondary index entries under the validation strategy.
//!
//! A secondary entry `(sk, pk, ts)` is stale iff the primary key index holds
//! `pk` with a larger timestamp. Repair streams a component's entries into an
//! external sorter, validates the sorted keys against the primary key index
//! components that are newer than the component's repaired timestamp, and
//! records stale positions in a fresh immutable bitmap.

mod sorter;

use std::sync::Arc;
use std::time::{Duration, Instant};

pub use sorter::{ExternalSorter, SortedTriples, Triple};

use crate::component::{DiskComponent, LookupCursor};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pager::IoStats;
use crate::tree::{disk_source, memory_source, merged_entries, MergeHook, MergeIter, MergeOutcome};
use crate::bitmap::{Mutability, ValidityBitmap};
use crate::types::{IndexEntry, IndexKey, PrimaryKey, Timestamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepairOptions {
    /// Skip primary key components at or below the repaired timestamp.
    pub prune: bool,
    /// Use Bloom filters of strictly newer primary key components to keep
    /// keys out of the sorter.
    pub bloom_opt: bool,
}

impl Default for RepairOptions {
    fn default() -> Self {
        RepairOptions {
            prune: true,
            bloom_opt: false,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RepairStats {
    pub entries_seen: u64,
    pub keys_sorted: u64,
    /// Keys that bypassed the sorter thanks to Bloom filter negatives.
    pub keys_skipped: u64,
    pub invalid: u64,
    /// Page and Bloom filter activity on the primary key index.
    pub pk_io: IoStats,
    pub co_sequential: bool,
    pub bloom_opt_used: bool,
    pub spilled_runs: usize,
    pub pk_components_searched: usize,
    pub pk_components_pruned: usize,
    pub elapsed: Duration,
}

/// The part of the primary key index a repair has to consult.
#[derive(Clone, Debug)]
pub struct PkView {
    /// Reconciled memory entries, sorted by key.
    pub memory: Vec<IndexEntry>,
    /// Disk components newer than the pruning watermark, newest first.
    pub disk: Vec<Arc<DiskComponent>>,
    pub pruned: usize,
    /// Largest timestamp present in the view.
    pub max_ts: Timestamp,
}

impl PkView {
    fn memory_ts(&self, pk: PrimaryKey) -> Option<Timestamp> {
        let key = IndexKey::primary(pk);
        self.memory
            .binary_search_by(|e| e.key.cmp(&key))
            .ok()
            .map(|i| self.memory[i].ts)
    }

    fn entry_count(&self) -> u64 {
        self.memory.len() as u64 + self.disk.iter().map(|c| c.entry_count()).sum::<u64>()
    }
}

/// Primary key index components (plus memory) with `max_ts > repaired_ts`.
pub fn prune_pk_components(ds: &Dataset, repaired_ts: Timestamp) -> PkView {
    let snap = ds.pk_index().snapshot(None, None);
    let (disk, pruned): (Vec<_>, Vec<_>) = snap
        .disk
        .iter()
        .cloned()
        .partition(|c| c.id().max_ts > repaired_ts);
    let max_ts = disk
        .iter()
        .map(|c| c.id().max_ts)
        .chain(std::iter::once(snap.memory_max_ts))
        .max()
        .unwrap_or(Timestamp::NONE);
    PkView {
        memory: snap.memory,
        disk,
        pruned: pruned.len(),
        max_ts,
    }
}

/// Merge hook validating every matter entry written by a secondary merge.
pub struct RepairHook {
    view: PkView,
    new_repaired_ts: Timestamp,
    sorter: ExternalSorter,
    /// Per merge input: the primary key components strictly newer than it.
    newer: Option<Vec<Vec<Arc<DiskComponent>>>>,
    stats: RepairStats,
    started: Instant,
}

impl RepairHook {
    pub fn new(
        ds: &Dataset,
        parts: &[Arc<DiskComponent>],
        opts: RepairOptions,
    ) -> Result<Self> {
        let prunable = if opts.prune {
            parts
                .iter()
                .map(|p| p.repaired_ts())
                .min()
                .unwrap_or(Timestamp::NONE)
        } else {
            Timestamp::NONE
        };
        let view = prune_pk_components(ds, prunable);
        let mut stats = RepairStats {
            pk_components_searched: view.disk.len(),
            pk_components_pruned: view.pruned,
            ..RepairStats::default()
        };
        let newer = if opts.bloom_opt && bloom_opt_applicable(ds, parts) {
            stats.bloom_opt_used = true;
            Some(
                parts
                    .iter()
                    .map(|p| {
                        view.disk
                            .iter()
                            .filter(|c| c.id().min_ts > p.id().max_ts)
                            .cloned()
                            .collect()
                    })
                    .collect(),
            )
        } else {
            None
        };
        let floor = parts.iter().map(|p| p.repaired_ts()).min().unwrap_or_default();
        Ok(RepairHook {
            new_repaired_ts: view.max_ts.max(floor),
            view,
            sorter: ExternalSorter::new(
                sorter::scratch_dir(ds.root()),
                ds.config().sort_memory_bytes,
            ),
            newer,
            stats,
            started: Instant::now(),
        })
    }

    pub fn stats(&self) -> &RepairStats {
        &self.stats
    }

    fn may_be_updated(&mut self, pk: PrimaryKey, part: usize) -> bool {
        let Some(newer) = &self.newer else {
            return true;
        };
        if self.view.memory_ts(pk).is_some() {
            return true;
        }
        let key = IndexKey::primary(pk);
        newer[part]
            .iter()
            .any(|c| c.bloom_may_contain(&key, &mut self.stats.pk_io))
    }

    fn validate(&mut self) -> Result<Vec<u64>> {
        let sorter = std::mem::replace(&mut self.sorter, ExternalSorter::new("", 1));
        self.stats.spilled_runs = sorter.spilled_runs();
        let sorted = sorter.finish()?;
        if self.stats.keys_sorted > self.view.entry_count() {
            self.stats.co_sequential = true;
            self.validate_merge_scan(sorted)
        } else {
            self.validate_lookups(sorted)
        }
    }

    /// Point lookups in ascending key order with a stateful cursor per
    /// component.
    fn validate_lookups(&mut self, sorted: SortedTriples) -> Result<Vec<u64>> {
        let mut cursors: Vec<LookupCursor> = self.view.disk.iter().map(|_| LookupCursor::new()).collect();
        let mut invalid = Vec::new();
        let mut last: Option<(u64, Option<Timestamp>)> = None;
        for t in sorted {
            let t = t?;
            let newest = match last {
                Some((pk, ts)) if pk == t.pk => ts,
                _ => {
                    let ts = self.newest_ts(PrimaryKey(t.pk), &mut cursors)?;
                    last = Some((t.pk, ts));
                    ts
                }
            };
            if newest.is_some_and(|ts| ts.0 > t.ts) {
                invalid.push(t.pos);
            }
        }
        Ok(invalid)
    }

    fn newest_ts(&mut self, pk: PrimaryKey, cursors: &mut [LookupCursor]) -> Result<Option<Timestamp>> {
        if let Some(ts) = self.view.memory_ts(pk) {
            return Ok(Some(ts));
        }
        let key = IndexKey::primary(pk);
        for (c, cur) in self.view.disk.iter().zip(cursors.iter_mut()) {
            if let Some((_, e)) = c.point_lookup(&key, Some(cur), &mut self.stats.pk_io)? {
                return Ok(Some(e.ts));
            }
        }
        Ok(None)
    }

    /// Co-sequential pass over the sorted keys and a reconciled scan of the
    /// unpruned primary key index.
    fn validate_merge_scan(&mut self, sorted: SortedTriples) -> Result<Vec<u64>> {
        let mut sources = vec![memory_source(self.view.memory.clone())];
        for c in &self.view.disk {
            sources.push(disk_source(c.scan_all(false)));
            self.stats.pk_io.pages_scanned += c.page_count() as u64;
        }
        let mut pk_stream = MergeIter::new(sources, true).peekable();
        let mut invalid = Vec::new();
        for t in sorted {
            let t = t?;
            let mut newest = None;
            while let Some(next) = pk_stream.peek() {
                let e = match next {
                    Ok(s) => &s.entry,
                    Err(_) => return Err(pk_stream.next().unwrap().unwrap_err()),
                };
                match e.pk().0.cmp(&t.pk) {
                    std::cmp::Ordering::Less => {
                        pk_stream.next();
                    }
                    std::cmp::Ordering::Equal => {
                        newest = Some(e.ts);
                        break;
                    }
                    std::cmp::Ordering::Greater => break,
                }
            }
            if newest.is_some_and(|ts| ts.0 > t.ts) {
                invalid.push(t.pos);
            }
        }
        Ok(invalid)
    }
}

impl MergeHook for RepairHook {
    fn on_entry(&mut self, position: u64, entry: &IndexEntry, part: usize) -> Result<()> {
        self.stats.entries_seen += 1;
        if entry.anti_matter {
            return Ok(());
        }
        let pk = entry.pk();
        if !self.may_be_updated(pk, part) {
            self.stats.keys_skipped += 1;
            return Ok(());
        }
        self.stats.keys_sorted += 1;
        self.sorter.push(Triple {
            pk: pk.0,
            ts: entry.ts.0,
            pos: position,
        })
    }

    fn finish(&mut self, entry_count: u64) -> Result<MergeOutcome> {
        let invalid = self.validate()?;
        self.stats.invalid = invalid.len() as u64;
        self.stats.elapsed = self.started.elapsed();
        Ok(MergeOutcome {
            bitmap: Some(ValidityBitmap::immutable_from_invalid(entry_count, invalid)),
            repaired_ts: Some(self.new_repaired_ts),
        })
    }
}

/// The optimization needs every primary key component to be either inside
/// a merge input's interval or disjoint from it; a component that overlaps
/// an input and reaches past it would report positives for older keys.
/// Each input must also be repaired up to its own max timestamp, since only
/// strictly newer components are consulted; a plain merge of two flushes
/// can hold an entry made stale by its newer half.
pub fn bloom_opt_applicable(ds: &Dataset, parts: &[Arc<DiskComponent>]) -> bool {
    let pk = ds.pk_index().disk_components();
    pk.iter().all(|c| c.bloom().is_some())
        && parts.iter().all(|p| p.repaired_ts() >= p.id().max_ts)
        && parts.iter().all(|p| {
            pk.iter()
                .all(|c| !c.id().overlaps(&p.id()) || p.id().contains(&c.id()))
        })
}

/// A computed repair that has not been applied.
#[derive(Debug)]
pub struct RepairResult {
    pub bitmap: ValidityBitmap,
    pub repaired_ts: Timestamp,
    pub stats: RepairStats,
}

/// Runs merge repair over the would-be merged stream of `parts` without
/// writing anything. Positions match those of an actual merge.
pub fn compute_merge_repair(
    ds: &Dataset,
    index: usize,
    parts: &[Arc<DiskComponent>],
    opts: RepairOptions,
) -> Result<RepairResult> {
    let tree = ds.secondary(index)?;
    let plan = tree.plan_merge(parts)?;
    let mut hook = RepairHook::new(ds, parts, opts)?;
    let bitmaps = parts.iter().map(|p| p.bitmap()).collect();
    let mut count = 0;
    for item in merged_entries(&plan, bitmaps) {
        let item = item?;
        hook.on_entry(count, &item.entry, item.source)?;
        count += 1;
    }
    let outcome = hook.finish(count)?;
    Ok(RepairResult {
        bitmap: outcome.bitmap.expect("repair produces a bitmap"),
        repaired_ts: outcome.repaired_ts.expect("repair produces a timestamp"),
        stats: hook.stats,
    })
}

#[derive(Debug)]
pub struct MergeRepairReport {
    pub component: Arc<DiskComponent>,
    pub stats: RepairStats,
}

/// Merges secondary components, attaching a fresh bitmap and repaired
/// timestamp. Falls back to plain repair when the Bloom filter optimization
/// is requested but its precondition does not hold.
pub fn merge_repair(
    ds: &Dataset,
    index: usize,
    parts: &[Arc<DiskComponent>],
    bloom_opt: bool,
) -> Result<MergeRepairReport> {
    let tree = ds.secondary(index)?;
    let opts = RepairOptions {
        prune: true,
        bloom_opt,
    };
    let mut hook = RepairHook::new(ds, parts, opts)?;
    let component = tree.merge(parts, Some(&mut hook))?;
    ds.record_repair(&hook.stats);
    Ok(MergeRepairReport {
        component,
        stats: hook.stats,
    })
}

/// Computes a new bitmap for a single component without rewriting it.
pub fn compute_standalone_repair(
    ds: &Dataset,
    component: &Arc<DiskComponent>,
    opts: RepairOptions,
) -> Result<RepairResult> {
    let mut hook = RepairHook::new(ds, std::slice::from_ref(component), opts)?;
    for item in component.scan_all(false) {
        let item = item?;
        hook.on_entry(item.ordinal, &item.entry, 0)?;
    }
    let outcome = hook.finish(component.entry_count())?;
    let fresh = outcome.bitmap.expect("repair produces a bitmap");
    let bitmap = match component.bitmap() {
        Some(old) => old.union(&fresh),
        None => fresh,
    };
    Ok(RepairResult {
        bitmap,
        repaired_ts: outcome.repaired_ts.expect("repair produces a timestamp"),
        stats: hook.stats,
    })
}

/// Replaces a component's bitmap with a repaired one (a superset of the old
/// one) and advances its repaired timestamp.
pub fn standalone_repair(
    ds: &Dataset,
    index: usize,
    component: &Arc<DiskComponent>,
) -> Result<RepairStats> {
    let tree = ds.secondary(index)?;
    let _guard = tree.lock_merges();
    if !tree.disk_components().iter().any(|c| Arc::ptr_eq(c, component)) {
        return Err(Error::Usage(format!("component {} is not live", component.id())));
    }
    let res = compute_standalone_repair(ds, component, RepairOptions::default())?;
    let bitmap = ValidityBitmap::from_bytes(
        &res.bitmap.to_bytes(component.entry_count()),
        component.entry_count(),
        Mutability::Immutable,
    )?;
    component.attach_bitmap(Arc::new(bitmap))?;
    component.persist_bitmap()?;
    if res.repaired_ts > component.repaired_ts() {
        component.set_repaired_ts(res.repaired_ts)?;
    }
    ds.record_repair(&res.stats);
    Ok(res.stats)
}

/// Standalone repair of every secondary component.
pub fn repair_all(ds: &Dataset) -> Result<Vec<RepairStats>> {
    let _m = ds.maintenance_guard();
    let mut out = Vec::new();
    for i in 0..ds.secondaries().len() {
        for c in ds.secondaries()[i].disk_components().iter() {
            out.push(standalone_repair(ds, i, c)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
