//! Fixed-capacity LRU page cache with exact I/O counters.
//!
//! Every cache miss on a point-lookup path counts as one `pages_read`.
//! Sequential scans (merges, filtered scans) bypass the cache and are counted
//! as `pages_scanned`.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::types::IndexEntry;

/// A decoded data page.
#[derive(Debug)]
pub struct Page {
    pub entries: Vec<IndexEntry>,
}

/// Per-operation I/O counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IoStats {
    pub pages_read: u64,
    pub pages_scanned: u64,
    pub pages_written: u64,
    pub cache_hits: u64,
    pub bloom_tests: u64,
}

impl IoStats {
    pub fn add(&mut self, other: &IoStats) {
        self.pages_read += other.pages_read;
        self.pages_scanned += other.pages_scanned;
        self.pages_written += other.pages_written;
        self.cache_hits += other.cache_hits;
        self.bloom_tests += other.bloom_tests;
    }

    pub fn delta(&self, earlier: &IoStats) -> IoStats {
        IoStats {
            pages_read: self.pages_read - earlier.pages_read,
            pages_scanned: self.pages_scanned - earlier.pages_scanned,
            pages_written: self.pages_written - earlier.pages_written,
            cache_hits: self.cache_hits - earlier.cache_hits,
            bloom_tests: self.bloom_tests - earlier.bloom_tests,
        }
    }
}

#[derive(Debug, Default)]
struct Totals {
    pages_read: AtomicU64,
    pages_scanned: AtomicU64,
    pages_written: AtomicU64,
    cache_hits: AtomicU64,
    bloom_tests: AtomicU64,
}

type PageKey = (u64, u32);

#[derive(Default)]
struct Lru {
    map: HashMap<PageKey, (Arc<Page>, u64)>,
    order: BTreeMap<u64, PageKey>,
    tick: u64,
}

impl Lru {
    fn touch(&mut self, key: PageKey) -> Option<Arc<Page>> {
        let tick = self.tick + 1;
        let (page, stamp) = self.map.get_mut(&key)?;
        self.order.remove(stamp);
        *stamp = tick;
        self.tick = tick;
        self.order.insert(tick, key);
        Some(page.clone())
    }

    fn insert(&mut self, key: PageKey, page: Arc<Page>, capacity: usize) {
        if capacity == 0 {
            return;
        }
        if self.touch(key).is_some() {
            return;
        }
        while self.map.len() >= capacity {
            let Some((_, victim)) = self.order.pop_first() else { break };
            self.map.remove(&victim);
        }
        self.tick += 1;
        self.map.insert(key, (page, self.tick));
        self.order.insert(self.tick, key);
    }
}

pub struct PageCache {
    capacity_pages: usize,
    lru: Mutex<Lru>,
    totals: Totals,
    next_file_id: AtomicU64,
}

impl std::fmt::Debug for PageCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PageCache")
            .field("capacity_pages", &self.capacity_pages)
            .finish()
    }
}

impl PageCache {
    pub fn new(capacity_bytes: usize, page_size: usize) -> Self {
        PageCache {
            capacity_pages: capacity_bytes / page_size.max(1),
            lru: Mutex::new(Lru::default()),
            totals: Totals::default(),
            next_file_id: AtomicU64::new(1),
        }
    }

    pub fn capacity_pages(&self) -> usize {
        self.capacity_pages
    }

    pub(crate) fn allocate_file_id(&self) -> u64 {
        self.next_file_id.fetch_add(1, Ordering::Relaxed)
    }

    /// Returns the cached page or loads it, counting a miss as one page read.
    pub(crate) fn get_or_load(
        &self,
        file_id: u64,
        page_no: u32,
        stats: &mut IoStats,
        load: impl FnOnce() -> crate::Result<Page>,
    ) -> crate::Result<Arc<Page>> {
        let key = (file_id, page_no);
        if let Some(page) = self.lru.lock().touch(key) {
            stats.cache_hits += 1;
            self.totals.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(page);
        }
        let page = Arc::new(load()?);
        stats.pages_read += 1;
        self.totals.pages_read.fetch_add(1, Ordering::Relaxed);
        self.lru.lock().insert(key, page.clone(), self.capacity_pages);
        Ok(page)
    }

    pub(crate) fn record_scanned(&self, stats: &mut IoStats) {
        stats.pages_scanned += 1;
        self.totals.pages_scanned.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn record_written(&self, pages: u64) {
        self.totals.pages_written.fetch_add(pages, Ordering::Relaxed);
    }

    pub(crate) fn record_bloom_test(&self, stats: &mut IoStats) {
        stats.bloom_tests += 1;
        self.totals.bloom_tests.fetch_add(1, Ordering::Relaxed);
    }

    /// Drops every cached page of a file.
    pub(crate) fn evict_file(&self, file_id: u64) {
        let mut lru = self.lru.lock();
        let victims: Vec<_> = lru
            .map
            .iter()
            .filter(|(k, _)| k.0 == file_id)
            .map(|(k, (_, stamp))| (*k, *stamp))
            .collect();
        for (k, stamp) in victims {
            lru.map.remove(&k);
            lru.order.remove(&stamp);
        }
    }

    /// Empties the cache so the next reads are cold.
    pub fn clear(&self) {
        let mut lru = self.lru.lock();
        lru.map.clear();
        lru.order.clear();
    }

    pub fn cached_pages(&self) -> usize {
        self.lru.lock().map.len()
    }

    pub fn totals(&self) -> IoStats {
        IoStats {
            pages_read: self.totals.pages_read.load(Ordering::Relaxed),
            pages_scanned: self.totals.pages_scanned.load(Ordering::Relaxed),
            pages_written: self.totals.pages_written.load(Ordering::Relaxed),
            cache_hits: self.totals.cache_hits.load(Ordering::Relaxed),
            bloom_tests: self.totals.bloom_tests.load(Ordering::Relaxed),
        }
    }
}
