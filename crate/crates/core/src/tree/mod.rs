//! A single LSM index: memory components, flush, the disk component list,
//! merges and reconciled reads.

mod memory;
mod merge_iter;
mod policy;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, MutexGuard, RwLock};

pub use memory::MemoryComponent;
pub use merge_iter::{disk_source, memory_source, EntrySource, MergeIter, SourcedEntry};
pub use policy::{MergePolicy, MergePolicyKind};

use crate::bitmap::{Mutability, ValidityBitmap};
use crate::component::{ComponentBuilder, ComponentConfig, ComponentScan, DiskComponent, ScanItem};
use crate::error::{Error, Result};
use crate::pager::{IoStats, PageCache};
use crate::types::{ComponentId, IndexEntry, IndexKey, RangeFilter, Timestamp};

pub type FilterKeyFn = Arc<dyn Fn(&IndexEntry) -> Option<i64> + Send + Sync>;
pub type EventSink = Arc<dyn Fn(&TreeEvent) + Send + Sync>;
pub type DiskList = Arc<Vec<Arc<DiskComponent>>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TreeKind {
    Primary,
    PrimaryKey,
    Secondary,
}

/// How a merged component's range filter is derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterMerge {
    /// Union of the inputs' filters. Needed when filters were widened by
    /// deleted values that no longer appear in the entries.
    Union,
    /// Recomputed from the surviving matter entries.
    FromEntries,
}

#[derive(Clone, Debug)]
pub struct TreeConfig {
    pub name: String,
    pub kind: TreeKind,
    pub component: ComponentConfig,
    pub policy: MergePolicy,
    pub filter_merge: FilterMerge,
    /// Keep anti-matter even in merges that reach the oldest component.
    pub retain_anti_matter: bool,
}

impl TreeConfig {
    pub fn new(name: impl Into<String>, kind: TreeKind) -> Self {
        TreeConfig {
            name: name.into(),
            kind,
            component: ComponentConfig::default(),
            policy: MergePolicy::default(),
            filter_merge: FilterMerge::FromEntries,
            retain_anti_matter: false,
        }
    }
}

#[derive(Clone, Debug)]
pub enum TreeEvent {
    Flush {
        tree: String,
        id: ComponentId,
        entries: u64,
        bytes: u64,
    },
    Merge {
        tree: String,
        parts: usize,
        id: ComponentId,
        entries: u64,
        bytes: u64,
        elapsed: Duration,
    },
}

/// Where a lookup hit was found.
#[derive(Clone, Debug)]
pub enum Location {
    Memory,
    Disk {
        component: Arc<DiskComponent>,
        ordinal: u64,
    },
}

#[derive(Clone, Debug)]
pub struct Found {
    pub entry: IndexEntry,
    pub location: Location,
    /// False when the hit's validity bit is set.
    pub valid: bool,
}

impl Found {
    /// The record is live: matter and not invalidated.
    pub fn is_live(&self) -> bool {
        self.valid && !self.entry.anti_matter
    }
}

/// Per-entry hook run by merges, used by secondary repair.
pub trait MergeHook {
    fn on_entry(&mut self, position: u64, entry: &IndexEntry, part: usize) -> Result<()>;
    fn finish(&mut self, entry_count: u64) -> Result<MergeOutcome>;
}

#[derive(Debug, Default)]
pub struct MergeOutcome {
    pub bitmap: Option<ValidityBitmap>,
    pub repaired_ts: Option<Timestamp>,
}

struct TreeState {
    active: MemoryComponent,
    sealed: Option<Arc<MemoryComponent>>,
    disk: DiskList,
}

pub struct LsmTree {
    config: TreeConfig,
    dir: PathBuf,
    cache: Arc<PageCache>,
    filter_key: Option<FilterKeyFn>,
    events: Option<EventSink>,
    state: RwLock<TreeState>,
    merge_lock: Mutex<()>,
    seq: AtomicU64,
}

impl std::fmt::Debug for LsmTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LsmTree")
            .field("name", &self.config.name)
            .field("components", &self.disk_components().len())
            .finish()
    }
}

impl LsmTree {
    pub fn create(dir: impl Into<PathBuf>, config: TreeConfig, cache: Arc<PageCache>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(LsmTree {
            config,
            dir,
            cache,
            filter_key: None,
            events: None,
            state: RwLock::new(TreeState {
                active: MemoryComponent::new(),
                sealed: None,
                disk: Arc::new(Vec::new()),
            }),
            merge_lock: Mutex::new(()),
            seq: AtomicU64::new(0),
        })
    }

    pub fn with_filter_key(mut self, f: FilterKeyFn) -> Self {
        self.filter_key = Some(f);
        self
    }

    pub fn with_events(mut self, sink: EventSink) -> Self {
        self.events = Some(sink);
        self
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn kind(&self) -> TreeKind {
        self.config.kind
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn cache(&self) -> &Arc<PageCache> {
        &self.cache
    }

    pub fn upsert_entry(&self, e: IndexEntry) {
        self.state.write().active.insert(e);
    }

    pub fn widen_memory_filter(&self, v: i64) {
        self.state.write().active.widen_filter(v);
    }

    /// Bytes buffered in memory, sealed component included.
    pub fn memory_bytes(&self) -> usize {
        let s = self.state.read();
        s.active.size_bytes() + s.sealed.as_ref().map_or(0, |m| m.size_bytes())
    }

    pub fn memory_len(&self) -> usize {
        let s = self.state.read();
        s.active.len() + s.sealed.as_ref().map_or(0, |m| m.len())
    }

    pub fn memory_filter(&self) -> RangeFilter {
        let s = self.state.read();
        let mut f = s.active.filter();
        if let Some(m) = &s.sealed {
            f.union(&m.filter());
        }
        f
    }

    /// Current disk components, newest first.
    pub fn disk_components(&self) -> DiskList {
        self.state.read().disk.clone()
    }

    pub fn component_ids(&self) -> Vec<ComponentId> {
        self.disk_components().iter().map(|c| c.id()).collect()
    }

    /// Memory probe only: active component first, then the sealed one.
    pub fn memory_get(&self, key: &IndexKey) -> Option<IndexEntry> {
        let s = self.state.read();
        Self::memory_get_locked(&s, key)
    }

    fn memory_get_locked(s: &TreeState, key: &IndexKey) -> Option<IndexEntry> {
        s.active
            .get(key)
            .or_else(|| s.sealed.as_ref().and_then(|m| m.get(key)))
    }

    /// Probes memory for every key and pins the disk list in one atomic step,
    /// so a concurrent flush cannot hide an entry between the two.
    pub fn memory_probe_and_pin(&self, keys: &[IndexKey]) -> (Vec<Option<IndexEntry>>, DiskList) {
        let s = self.state.read();
        let hits = keys.iter().map(|k| Self::memory_get_locked(&s, k)).collect();
        (hits, s.disk.clone())
    }

    /// Memory, then disk components newest to oldest; first hit wins.
    pub fn lookup(&self, key: &IndexKey, stats: &mut IoStats) -> Result<Option<Found>> {
        let (mem, disk) = {
            let s = self.state.read();
            (Self::memory_get_locked(&s, key), s.disk.clone())
        };
        if let Some(entry) = mem {
            return Ok(Some(Found {
                entry,
                location: Location::Memory,
                valid: true,
            }));
        }
        for c in disk.iter() {
            if let Some((ordinal, entry)) = c.point_lookup(key, None, stats)? {
                let valid = c.bitmap_is_valid(ordinal)?;
                return Ok(Some(Found {
                    entry,
                    location: Location::Disk {
                        component: c.clone(),
                        ordinal,
                    },
                    valid,
                }));
            }
        }
        Ok(None)
    }

    /// Pins a consistent view: the reconciled memory contents within the
    /// bounds and the disk list.
    pub fn snapshot(&self, lo: Option<&IndexKey>, hi: Option<&IndexKey>) -> TreeSnapshot {
        let s = self.state.read();
        let active: Vec<IndexEntry> = s.active.range(lo, hi).collect();
        let mut filter = s.active.filter();
        let mut memory_max_ts = s.active.max_ts();
        let memory = match &s.sealed {
            None => active,
            Some(sealed) => {
                filter.union(&sealed.filter());
                memory_max_ts = memory_max_ts.max(sealed.max_ts());
                let older: Vec<IndexEntry> = sealed.range(lo, hi).collect();
                MergeIter::new(vec![memory_source(active), memory_source(older)], true)
                    .map(|r| r.map(|s| s.entry))
                    .collect::<Result<Vec<_>>>()
                    .expect("memory sources are infallible")
            }
        };
        TreeSnapshot {
            memory,
            memory_filter: filter,
            memory_max_ts,
            disk: s.disk.clone(),
            lo: lo.cloned(),
            hi: hi.cloned(),
        }
    }

    /// Reconciled scan over every component; anti-matter is included.
    pub fn scan(&self, lo: Option<&IndexKey>, hi: Option<&IndexKey>) -> TreeScan {
        self.snapshot(lo, hi).scan(ScanMode::Reconciled, true, |_, _| true)
    }

    /// Moves the active memory component into the flushing slot. Returns
    /// false when there is nothing to seal.
    pub fn seal(&self) -> Result<bool> {
        let mut s = self.state.write();
        if s.active.is_empty() {
            return Ok(false);
        }
        if s.sealed.is_some() {
            return Err(Error::Usage(format!(
                "tree `{}` already has a sealed memory component",
                self.config.name
            )));
        }
        let m = std::mem::take(&mut s.active);
        s.sealed = Some(Arc::new(m));
        Ok(true)
    }

    pub fn sealed_len(&self) -> usize {
        self.state.read().sealed.as_ref().map_or(0, |m| m.len())
    }

    pub fn sealed_observed_id(&self) -> Option<ComponentId> {
        self.state.read().sealed.as_ref().and_then(|m| m.observed_id())
    }

    fn next_path(&self, id: ComponentId) -> PathBuf {
        let seq = self.seq.fetch_add(1, Ordering::Relaxed);
        self.dir.join(format!("{}-{}_{}.run", id.min_ts, id.max_ts, seq))
    }

    /// Writes the sealed memory component to disk and installs it as the
    /// newest component. `id` defaults to the observed timestamp interval.
    /// On failure the sealed entries are folded back into memory.
    pub fn flush_sealed(
        &self,
        id: Option<ComponentId>,
        bitmap: Option<Arc<ValidityBitmap>>,
    ) -> Result<Option<Arc<DiskComponent>>> {
        match self.build_sealed(id, bitmap) {
            Ok(Some(c)) => {
                self.install_flushed(c.clone());
                Ok(Some(c))
            }
            Ok(None) => Ok(None),
            Err(e) => {
                self.abort_sealed();
                Err(e)
            }
        }
    }

    /// Writes the sealed component without installing it.
    pub(crate) fn build_sealed(
        &self,
        id: Option<ComponentId>,
        bitmap: Option<Arc<ValidityBitmap>>,
    ) -> Result<Option<Arc<DiskComponent>>> {
        let Some(sealed) = self.state.read().sealed.clone() else {
            return Ok(None);
        };
        self.write_sealed(&sealed, id, bitmap).map(Some)
    }

    pub(crate) fn install_flushed(&self, c: Arc<DiskComponent>) {
        let mut s = self.state.write();
        let mut disk = Vec::with_capacity(s.disk.len() + 1);
        disk.push(c.clone());
        disk.extend(s.disk.iter().cloned());
        s.disk = Arc::new(disk);
        s.sealed = None;
        drop(s);
        self.emit(TreeEvent::Flush {
            tree: self.config.name.clone(),
            id: c.id(),
            entries: c.entry_count(),
            bytes: c.size_bytes(),
        });
    }

    /// Folds the sealed component back under the active one.
    pub(crate) fn abort_sealed(&self) {
        let mut s = self.state.write();
        if let Some(sealed) = s.sealed.take() {
            let mut restored = (*sealed).clone();
            let newer = std::mem::take(&mut s.active);
            for entry in newer.iter() {
                restored.insert(entry);
            }
            if let Some((lo, hi)) = newer.filter().bounds() {
                restored.widen_filter(lo);
                restored.widen_filter(hi);
            }
            s.active = restored;
        }
    }

    fn write_sealed(
        &self,
        sealed: &MemoryComponent,
        id: Option<ComponentId>,
        bitmap: Option<Arc<ValidityBitmap>>,
    ) -> Result<Arc<DiskComponent>> {
        let id = id.or_else(|| sealed.observed_id()).ok_or_else(|| {
            Error::Usage(format!(
                "tree `{}` holds untimestamped entries; flush needs an explicit id",
                self.config.name
            ))
        })?;
        let mut b = ComponentBuilder::create(self.next_path(id), self.config.component)?;
        for e in sealed.iter() {
            b.add(&e)?;
        }
        b.union_filter(&sealed.filter());
        let c = Arc::new(b.finish(id, id.max_ts, &self.cache)?);
        if let Some(bm) = bitmap {
            c.attach_bitmap(bm)?;
            c.persist_bitmap()?;
        }
        Ok(c)
    }

    /// Seal and flush in one step.
    pub fn flush(&self, id: Option<ComponentId>) -> Result<Option<Arc<DiskComponent>>> {
        if !self.seal()? {
            return Ok(None);
        }
        self.flush_sealed(id, None)
    }

    /// Tiering candidates, newest first. Followers and non-merging trees
    /// never propose merges.
    pub fn pick_merge(&self) -> Option<Vec<Arc<DiskComponent>>> {
        if self.config.policy.kind != MergePolicyKind::Tiering {
            return None;
        }
        let disk = self.disk_components();
        let sizes: Vec<u64> = disk.iter().rev().map(|c| c.size_bytes()).collect();
        let range = self.config.policy.pick_tiering(&sizes)?;
        Some(disk[..range.len()].to_vec())
    }

    /// Components whose id interval lies inside `id`, newest first.
    pub fn components_within(&self, id: ComponentId) -> Vec<Arc<DiskComponent>> {
        self.disk_components()
            .iter()
            .filter(|c| id.contains(&c.id()))
            .cloned()
            .collect()
    }

    pub(crate) fn lock_merges(&self) -> MutexGuard<'_, ()> {
        self.merge_lock.lock()
    }

    /// Merges adjacent components into one and installs it.
    pub fn merge(
        &self,
        parts: &[Arc<DiskComponent>],
        hook: Option<&mut dyn MergeHook>,
    ) -> Result<Arc<DiskComponent>> {
        let _guard = self.lock_merges();
        let started = Instant::now();
        let plan = self.plan_merge(parts)?;
        let bitmaps = parts.iter().map(|p| p.bitmap()).collect();
        let new = self.run_merge(&plan, bitmaps, &mut |_| Ok(true), hook, |_, _| Ok(()))?;
        self.install_merge(&plan, new.clone())?;
        self.emit_merge(&plan, &new, started.elapsed());
        Ok(new)
    }

    pub(crate) fn emit_merge(&self, plan: &MergePlan, new: &DiskComponent, elapsed: Duration) {
        self.emit(TreeEvent::Merge {
            tree: self.config.name.clone(),
            parts: plan.parts.len(),
            id: new.id(),
            entries: new.entry_count(),
            bytes: new.size_bytes(),
            elapsed,
        });
    }

    fn emit(&self, ev: TreeEvent) {
        if let Some(sink) = &self.events {
            sink(&ev);
        }
    }

    /// Checks that `parts` is a contiguous newest-first run of the current
    /// disk list.
    pub(crate) fn plan_merge(&self, parts: &[Arc<DiskComponent>]) -> Result<MergePlan> {
        if parts.is_empty() {
            return Err(Error::Usage("merge needs at least one component".into()));
        }
        let disk = self.disk_components();
        let start = disk
            .iter()
            .position(|c| Arc::ptr_eq(c, &parts[0]))
            .ok_or_else(|| Error::Usage(format!("component {} is not live", parts[0].id())))?;
        let adjacent = disk.len() >= start + parts.len()
            && parts
                .iter()
                .zip(&disk[start..])
                .all(|(a, b)| Arc::ptr_eq(a, b));
        if !adjacent {
            return Err(Error::Usage(format!(
                "merge inputs of `{}` are not adjacent",
                self.config.name
            )));
        }
        Ok(MergePlan {
            parts: parts.to_vec(),
            includes_oldest: start + parts.len() == disk.len() && !self.config.retain_anti_matter,
            id: ComponentId::span(parts.iter().map(|c| c.id())).expect("non-empty"),
        })
    }

    /// Builds the merged component without installing it. `keep` may veto
    /// entries; `copied` observes each written entry with its new ordinal.
    pub(crate) fn run_merge(
        &self,
        plan: &MergePlan,
        bitmaps: Vec<Option<Arc<ValidityBitmap>>>,
        keep: &mut dyn FnMut(&SourcedEntry) -> Result<bool>,
        mut hook: Option<&mut dyn MergeHook>,
        mut copied: impl FnMut(u64, &IndexEntry) -> Result<()>,
    ) -> Result<Arc<DiskComponent>> {
        let mut b = ComponentBuilder::create(self.next_path(plan.id), self.config.component)?;
        if self.config.filter_merge == FilterMerge::Union {
            for p in &plan.parts {
                b.union_filter(&p.range_filter());
            }
        }
        for item in merged_entries(plan, bitmaps) {
            let item = item?;
            if !keep(&item)? {
                continue;
            }
            let pos = b.add(&item.entry)?;
            if self.config.filter_merge == FilterMerge::FromEntries && !item.entry.anti_matter {
                if let Some(v) = self.filter_key.as_ref().and_then(|f| f(&item.entry)) {
                    b.widen_filter(v);
                }
            }
            if let Some(h) = hook.as_deref_mut() {
                h.on_entry(pos, &item.entry, item.source)?;
            }
            copied(pos, &item.entry)?;
        }
        let count = b.entry_count();
        let outcome = match hook {
            Some(h) => h.finish(count)?,
            None => MergeOutcome::default(),
        };
        let repaired = outcome.repaired_ts.unwrap_or_else(|| {
            plan.parts
                .iter()
                .map(|p| p.repaired_ts())
                .min()
                .unwrap_or(Timestamp::NONE)
        });
        let c = Arc::new(b.finish(plan.id, repaired, &self.cache)?);
        if let Some(bm) = outcome.bitmap {
            if bm.len() != count {
                return Err(Error::Build(format!(
                    "repair bitmap covers {} entries, component has {count}",
                    bm.len()
                )));
            }
            c.attach_bitmap(Arc::new(bm))?;
            c.persist_bitmap()?;
        }
        Ok(c)
    }

    /// Swaps the merged component in for its inputs. The inputs are deleted
    /// once the last reader drops them.
    pub(crate) fn install_merge(&self, plan: &MergePlan, new: Arc<DiskComponent>) -> Result<()> {
        let mut s = self.state.write();
        let start = s
            .disk
            .iter()
            .position(|c| Arc::ptr_eq(c, &plan.parts[0]))
            .ok_or_else(|| Error::Usage("merge inputs vanished".into()))?;
        let mut disk = Vec::with_capacity(s.disk.len() + 1 - plan.parts.len());
        disk.extend(s.disk[..start].iter().cloned());
        disk.push(new);
        disk.extend(s.disk[start + plan.parts.len()..].iter().cloned());
        s.disk = Arc::new(disk);
        drop(s);
        for p in &plan.parts {
            p.mark_obsolete();
        }
        Ok(())
    }

    /// File names of the live components, newest first.
    pub fn component_files(&self) -> Vec<String> {
        self.disk_components()
            .iter()
            .filter_map(|c| c.path().file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }

    /// Replaces the mutable bitmaps with fresh all-valid ones sized to each
    /// component; used when a tree is opened for in-place deletes.
    pub fn ensure_mutable_bitmaps(&self) -> Result<()> {
        for c in self.disk_components().iter() {
            if c.bitmap().is_none() {
                c.attach_bitmap(Arc::new(ValidityBitmap::new(c.entry_count(), Mutability::Mutable)))?;
            }
        }
        Ok(())
    }
}

/// The reconciled entry stream a merge writes, before any veto: entries
/// hidden by `bitmaps` are skipped and anti-matter is dropped when the merge
/// reaches the oldest component.
pub(crate) fn merged_entries(
    plan: &MergePlan,
    bitmaps: Vec<Option<Arc<ValidityBitmap>>>,
) -> impl Iterator<Item = Result<SourcedEntry>> {
    let sources = plan
        .parts
        .iter()
        .zip(bitmaps)
        .map(|(p, bm)| disk_source(p.scan(None, None, bm)))
        .collect();
    let drop_anti_matter = plan.includes_oldest;
    MergeIter::new(sources, true)
        .filter(move |r| !(drop_anti_matter && r.as_ref().is_ok_and(|s| s.entry.anti_matter)))
}

pub(crate) struct MergePlan {
    pub parts: Vec<Arc<DiskComponent>>,
    pub includes_oldest: bool,
    pub id: ComponentId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanMode {
    /// Newest entry per key wins across components.
    Reconciled,
    /// Every component yields its own valid entries; no cross-component
    /// reconciliation.
    Independent,
}

/// A pinned view of one tree.
#[derive(Clone, Debug)]
pub struct TreeSnapshot {
    /// Reconciled memory entries within the snapshot bounds.
    pub memory: Vec<IndexEntry>,
    pub memory_filter: RangeFilter,
    pub memory_max_ts: Timestamp,
    pub disk: DiskList,
    lo: Option<IndexKey>,
    hi: Option<IndexKey>,
}

impl TreeSnapshot {
    /// Scans memory (if `with_memory`) plus the disk components selected by
    /// `include(position, component)`, honoring validity bitmaps.
    pub fn scan(
        &self,
        mode: ScanMode,
        with_memory: bool,
        include: impl Fn(usize, &DiskComponent) -> bool,
    ) -> TreeScan {
        let pages = Arc::new(AtomicU64::new(0));
        let mut sources: Vec<EntrySource> = Vec::new();
        let mut origins = Vec::new();
        if with_memory {
            sources.push(memory_source(self.memory.clone()));
            origins.push(None);
        }
        let mut accessed = 0;
        for (i, c) in self.disk.iter().enumerate() {
            if !include(i, c) {
                continue;
            }
            accessed += 1;
            let scan = c.scan(self.lo.clone(), self.hi.clone(), c.bitmap());
            sources.push(disk_source(CountingScan::new(scan, pages.clone())));
            origins.push(Some(c.clone()));
        }
        TreeScan {
            inner: MergeIter::new(sources, mode == ScanMode::Reconciled),
            origins,
            pages,
            components_accessed: accessed,
        }
    }
}

struct CountingScan {
    scan: ComponentScan,
    seen: u64,
    sink: Arc<AtomicU64>,
}

impl CountingScan {
    fn new(scan: ComponentScan, sink: Arc<AtomicU64>) -> Self {
        CountingScan {
            scan,
            seen: 0,
            sink,
        }
    }

    fn sync(&mut self) {
        let now = self.scan.stats().pages_scanned;
        if now > self.seen {
            self.sink.fetch_add(now - self.seen, Ordering::Relaxed);
            self.seen = now;
        }
    }
}

impl Iterator for CountingScan {
    type Item = Result<ScanItem>;

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.scan.next();
        self.sync();
        item
    }
}

/// Merged scan over a snapshot. Items carry their originating component.
pub struct TreeScan {
    inner: MergeIter,
    origins: Vec<Option<Arc<DiskComponent>>>,
    pages: Arc<AtomicU64>,
    components_accessed: usize,
}

impl TreeScan {
    pub fn pages_scanned(&self) -> u64 {
        self.pages.load(Ordering::Relaxed)
    }

    pub fn components_accessed(&self) -> usize {
        self.components_accessed
    }

    /// Component an item came from; `None` for memory.
    pub fn origin(&self, item: &SourcedEntry) -> Option<&Arc<DiskComponent>> {
        self.origins[item.source].as_ref()
    }
}

impl Iterator for TreeScan {
    type Item = Result<SourcedEntry>;

    fn next(&mut self) -> Option<Self::Item> {
        self.inner.next()
    }
}
