//! A dataset partition: the primary index, the primary key index and the
//! secondary indexes, sharing a memory budget, a clock and a lock table.

mod config;
mod locks;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

pub use config::{
    CcMethod, DatasetConfig, RepairMode, SecondaryMaintenance, StrategyConfig, StrategyKind,
    UniquenessIndex,
};
pub use locks::{KeyGuard, LockTable};

use crate::bitmap::{Mutability, ValidityBitmap};
use crate::component::{ComponentConfig, DiskComponent};
use crate::concurrency::{self, BuildHooks};
use crate::error::{Error, Result};
use crate::pager::{IoStats, PageCache};
use crate::record::{DatasetSchema, Record};
use crate::repair;
use crate::tree::{
    EventSink, FilterKeyFn, FilterMerge, LsmTree, MergePolicy, MergePolicyKind, TreeConfig,
    TreeKind,
};
use crate::types::{ComponentId, IndexEntry, PrimaryKey, Timestamp};

const NO_TS: u64 = u64::MAX;

pub struct Dataset {
    config: DatasetConfig,
    cache: Arc<PageCache>,
    primary: LsmTree,
    pk_index: LsmTree,
    secondaries: Vec<LsmTree>,
    clock: AtomicU64,
    epoch_min: AtomicU64,
    epoch_max: AtomicU64,
    memory_bytes: AtomicUsize,
    locks: LockTable,
    ds_lock: RwLock<()>,
    maintenance: Mutex<()>,
    ingest_stats: Mutex<IoStats>,
    hooks: RwLock<Option<Arc<dyn BuildHooks>>>,
    repairs: Mutex<Vec<repair::RepairStats>>,
}

impl std::fmt::Debug for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dataset")
            .field("root", &self.config.root)
            .field("strategy", &self.config.strategy)
            .finish()
    }
}

impl Dataset {
    pub fn create(config: DatasetConfig) -> Result<Self> {
        Self::create_with_events(config, None)
    }

    pub fn create_with_events(config: DatasetConfig, events: Option<EventSink>) -> Result<Self> {
        config.validate()?;
        fs::create_dir_all(&config.root)?;
        let cache = Arc::new(PageCache::new(config.cache_bytes, config.page_size));
        let st = config.strategy;
        let tiering = MergePolicy::tiering(config.size_ratio, config.max_mergeable_bytes);
        let follower = MergePolicy {
            kind: MergePolicyKind::CorrelatedFollower,
            ..tiering
        };
        let with_bloom = ComponentConfig {
            page_size: config.page_size,
            bloom: Some(config.bloom),
        };
        let without_bloom = ComponentConfig {
            page_size: config.page_size,
            bloom: None,
        };
        // Stale secondary entries of deleted keys are only recognizable while
        // the primary key index still holds the tombstone.
        let lazy = st.lazy_secondaries();
        let make = |name: String, kind, component, policy, filter_merge| -> Result<LsmTree> {
            let retain_anti_matter = lazy
                && match kind {
                    TreeKind::PrimaryKey => true,
                    TreeKind::Primary => st.kind == StrategyKind::MutableBitmap,
                    TreeKind::Secondary => false,
                };
            let cfg = TreeConfig {
                name: name.clone(),
                kind,
                component,
                policy,
                filter_merge,
                retain_anti_matter,
            };
            let t = LsmTree::create(config.root.join(&name), cfg, cache.clone())?;
            Ok(match &events {
                Some(sink) => t.with_events(sink.clone()),
                None => t,
            })
        };

        let primary_policy = match st.kind {
            StrategyKind::MutableBitmap => follower,
            _ => tiering,
        };
        let primary_filter = match st.kind {
            StrategyKind::Eager => FilterMerge::Union,
            _ => FilterMerge::FromEntries,
        };
        let schema = config.schema.clone();
        let filter_fn: FilterKeyFn = Arc::new(move |e: &IndexEntry| {
            Record::decode(e.pk(), &e.payload)
                .ok()
                .and_then(|r| schema.extract_filter_key(&r).ok().flatten())
        });
        let primary = make(
            "primary".into(),
            TreeKind::Primary,
            with_bloom,
            primary_policy,
            primary_filter,
        )?
        .with_filter_key(filter_fn);
        let pk_index = make(
            "pk".into(),
            TreeKind::PrimaryKey,
            with_bloom,
            tiering,
            FilterMerge::FromEntries,
        )?;
        let secondary_policy = match (st.kind, st.repair) {
            (StrategyKind::Validation, RepairMode::MergeBloomOpt) => follower,
            _ => tiering,
        };
        let mut secondaries = Vec::new();
        for &field in &config.schema.secondary_keys {
            let name = format!("sec_{}", config.schema.fields[field].name);
            secondaries.push(make(
                name,
                TreeKind::Secondary,
                without_bloom,
                secondary_policy,
                FilterMerge::FromEntries,
            )?);
        }
        Ok(Dataset {
            config,
            cache,
            primary,
            pk_index,
            secondaries,
            clock: AtomicU64::new(0),
            epoch_min: AtomicU64::new(NO_TS),
            epoch_max: AtomicU64::new(0),
            memory_bytes: AtomicUsize::new(0),
            locks: LockTable::new(),
            ds_lock: RwLock::new(()),
            maintenance: Mutex::new(()),
            ingest_stats: Mutex::new(IoStats::default()),
            hooks: RwLock::new(None),
            repairs: Mutex::new(Vec::new()),
        })
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.config
    }

    pub fn strategy(&self) -> StrategyConfig {
        self.config.strategy
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.config.schema
    }

    pub fn root(&self) -> &Path {
        &self.config.root
    }

    pub fn cache(&self) -> &Arc<PageCache> {
        &self.cache
    }

    pub fn primary(&self) -> &LsmTree {
        &self.primary
    }

    pub fn pk_index(&self) -> &LsmTree {
        &self.pk_index
    }

    pub fn secondaries(&self) -> &[LsmTree] {
        &self.secondaries
    }

    pub fn secondary(&self, index: usize) -> Result<&LsmTree> {
        self.secondaries
            .get(index)
            .ok_or_else(|| Error::Usage(format!("no secondary index {index}")))
    }

    pub fn trees(&self) -> impl Iterator<Item = &LsmTree> {
        [&self.primary, &self.pk_index]
            .into_iter()
            .chain(self.secondaries.iter())
    }

    pub fn locks(&self) -> &LockTable {
        &self.locks
    }

    /// Issues the next timestamp. Values are strictly increasing.
    pub fn next_ts(&self) -> Timestamp {
        let ts = self.clock.fetch_add(1, Ordering::SeqCst) + 1;
        self.epoch_min.fetch_min(ts, Ordering::SeqCst);
        self.epoch_max.fetch_max(ts, Ordering::SeqCst);
        Timestamp(ts)
    }

    /// Last issued timestamp.
    pub fn clock(&self) -> Timestamp {
        Timestamp(self.clock.load(Ordering::SeqCst))
    }

    pub fn with_key_lock<R>(&self, key: PrimaryKey, action: impl FnOnce() -> R) -> R {
        let _g = self.locks.exclusive(key);
        action()
    }

    pub fn with_dataset_shared<R>(&self, action: impl FnOnce() -> R) -> R {
        let _g = self.ds_lock.read();
        action()
    }

    pub fn with_dataset_exclusive<R>(&self, action: impl FnOnce() -> R) -> R {
        let _g = self.ds_lock.write();
        action()
    }

    pub(crate) fn dataset_shared(&self) -> RwLockReadGuard<'_, ()> {
        self.ds_lock.read()
    }

    pub(crate) fn dataset_exclusive(&self) -> RwLockWriteGuard<'_, ()> {
        self.ds_lock.write()
    }

    pub fn set_build_hooks(&self, hooks: Option<Arc<dyn BuildHooks>>) {
        *self.hooks.write() = hooks;
    }

    pub(crate) fn build_hooks(&self) -> Option<Arc<dyn BuildHooks>> {
        self.hooks.read().clone()
    }

    /// I/O performed by write-path lookups.
    pub fn ingest_stats(&self) -> IoStats {
        *self.ingest_stats.lock()
    }

    pub(crate) fn add_ingest_stats(&self, s: &IoStats) {
        self.ingest_stats.lock().add(s);
    }

    pub(crate) fn record_repair(&self, s: &repair::RepairStats) {
        self.repairs.lock().push(s.clone());
    }

    /// Statistics of every repair run so far, oldest first.
    pub fn repair_history(&self) -> Vec<repair::RepairStats> {
        self.repairs.lock().clone()
    }

    pub(crate) fn charge_memory(&self, bytes: usize) {
        self.memory_bytes.fetch_add(bytes, Ordering::Relaxed);
    }

    /// Key + payload bytes buffered across all trees since the last flush.
    pub fn memory_bytes(&self) -> usize {
        self.memory_bytes.load(Ordering::Relaxed)
    }

    /// Runs flush and merges when the memory budget is exhausted and no
    /// other thread is already doing so.
    pub(crate) fn maybe_maintain(&self) -> Result<()> {
        if !self.config.auto_maintenance || self.memory_bytes() < self.config.memory_budget_bytes {
            return Ok(());
        }
        let Some(_m) = self.maintenance.try_lock() else {
            return Ok(());
        };
        self.flush_locked()?;
        self.merge_locked()
    }

    /// Flushes every tree's memory component together. Every new component
    /// carries the same id: the interval of timestamps issued since the last
    /// flush.
    pub fn flush(&self) -> Result<()> {
        let _m = self.maintenance.lock();
        self.flush_locked()
    }

    fn flush_locked(&self) -> Result<()> {
        let _x = self.ds_lock.write();
        let lo = self.epoch_min.load(Ordering::SeqCst);
        if lo == NO_TS {
            return Ok(());
        }
        let id = ComponentId::new(lo, self.epoch_max.load(Ordering::SeqCst));
        let trees: Vec<&LsmTree> = self.trees().collect();
        for t in &trees {
            t.seal()?;
        }
        let shared_bitmap = if self.config.strategy.kind == StrategyKind::MutableBitmap {
            let n = self.primary.sealed_len();
            if self.pk_index.sealed_len() != n {
                for t in &trees {
                    t.abort_sealed();
                }
                return Err(Error::Build(format!(
                    "primary and primary key memory differ: {n} vs {} entries",
                    self.pk_index.sealed_len()
                )));
            }
            Some(Arc::new(ValidityBitmap::new(n as u64, Mutability::Mutable)))
        } else {
            None
        };
        let mut built: Vec<(&LsmTree, Arc<DiskComponent>)> = Vec::new();
        for t in &trees {
            let bm = match t.kind() {
                TreeKind::Primary | TreeKind::PrimaryKey => shared_bitmap.clone(),
                TreeKind::Secondary => None,
            };
            match t.build_sealed(Some(id), bm) {
                Ok(Some(c)) => built.push((t, c)),
                Ok(None) => {}
                Err(e) => {
                    for (_, c) in &built {
                        c.mark_obsolete();
                    }
                    for t in &trees {
                        t.abort_sealed();
                    }
                    return Err(e);
                }
            }
        }
        for (t, c) in built {
            t.install_flushed(c);
        }
        self.epoch_min.store(NO_TS, Ordering::SeqCst);
        self.epoch_max.store(0, Ordering::SeqCst);
        self.memory_bytes.store(0, Ordering::SeqCst);
        self.write_manifest()
    }

    /// Runs every merge the policies call for.
    pub fn merge(&self) -> Result<()> {
        let _m = self.maintenance.lock();
        self.merge_locked()
    }

    fn merge_locked(&self) -> Result<()> {
        let st = self.config.strategy;
        match st.kind {
            StrategyKind::Eager => {
                for t in self.trees() {
                    while let Some(parts) = t.pick_merge() {
                        t.merge(&parts, None)?;
                    }
                }
            }
            StrategyKind::Validation => {
                while let Some(parts) = self.primary.pick_merge() {
                    self.primary.merge(&parts, None)?;
                }
                if st.repair == RepairMode::MergeBloomOpt {
                    while let Some(pk_parts) = self.pk_index.pick_merge() {
                        self.correlated_repair_merge(&pk_parts)?;
                    }
                } else {
                    while let Some(parts) = self.pk_index.pick_merge() {
                        self.pk_index.merge(&parts, None)?;
                    }
                    for i in 0..self.secondaries.len() {
                        let t = &self.secondaries[i];
                        while let Some(parts) = t.pick_merge() {
                            if st.repair == RepairMode::Merge {
                                repair::merge_repair(self, i, &parts, false)?;
                            } else {
                                t.merge(&parts, None)?;
                            }
                        }
                    }
                }
            }
            StrategyKind::MutableBitmap => {
                while let Some(pk_parts) = self.pk_index.pick_merge() {
                    let id = span(&pk_parts);
                    let primary_parts = self.primary.components_within(id);
                    concurrency::merge_mutable(self, &pk_parts, &primary_parts)?;
                }
                for t in &self.secondaries {
                    while let Some(parts) = t.pick_merge() {
                        t.merge(&parts, None)?;
                    }
                }
            }
        }
        self.write_manifest()
    }

    /// Secondary merges led by the primary key index, each repaired with the
    /// Bloom filter optimization against the pre-merge primary key index.
    fn correlated_repair_merge(&self, pk_parts: &[Arc<DiskComponent>]) -> Result<()> {
        let id = span(pk_parts);
        for i in 0..self.secondaries.len() {
            let parts = self.secondaries[i].components_within(id);
            if !parts.is_empty() {
                repair::merge_repair(self, i, &parts, true)?;
            }
        }
        self.pk_index.merge(pk_parts, None)?;
        Ok(())
    }

    /// Flushes memory and merges until no policy asks for more.
    pub fn settle(&self) -> Result<()> {
        let _m = self.maintenance.lock();
        self.flush_locked()?;
        self.merge_locked()
    }

    pub(crate) fn maintenance_guard(&self) -> parking_lot::MutexGuard<'_, ()> {
        self.maintenance.lock()
    }

    /// Rewrites `<root>/MANIFEST` listing the live components per index.
    pub fn write_manifest(&self) -> Result<()> {
        let mut out = Vec::new();
        for t in self.trees() {
            write!(out, "{}:", t.name())?;
            for f in t.component_files() {
                write!(out, " {f}")?;
            }
            writeln!(out)?;
        }
        let path = self.config.root.join("MANIFEST");
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &out)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Disk component counts per tree: primary, primary key, secondaries.
    pub fn component_counts(&self) -> Vec<(String, usize)> {
        self.trees()
            .map(|t| (t.name().to_string(), t.disk_components().len()))
            .collect()
    }
}

pub(crate) fn span(parts: &[Arc<DiskComponent>]) -> ComponentId {
    ComponentId::span(parts.iter().map(|c| c.id())).expect("non-empty merge")
}

#[cfg(test)]
mod tests;
