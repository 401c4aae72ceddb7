//! Immutable sorted-run disk components.

mod builder;
pub mod format;
pub mod search;

use std::fs::{self, File};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

pub use builder::{build_component, ComponentBuilder, ComponentConfig, DEFAULT_PAGE_SIZE};

use crate::bitmap::{Mutability, ValidityBitmap};
use crate::bloom::BloomFilter;
use crate::concurrency::BuildLink;
use crate::error::{Error, Result};
use crate::pager::{IoStats, Page, PageCache};
use crate::types::{ComponentId, IndexEntry, IndexKey, RangeFilter, Timestamp};
use format::Footer;

/// Remembers the last leaf page and slot of a lookup so that ascending
/// lookups can resume from there. Belongs to a single query.
#[derive(Debug, Default)]
pub struct LookupCursor {
    page_no: Option<usize>,
    page: Option<Arc<Page>>,
    pos: usize,
}

impl LookupCursor {
    pub fn new() -> Self {
        LookupCursor::default()
    }
}

pub struct DiskComponent {
    path: PathBuf,
    file: File,
    file_id: u64,
    file_len: u64,
    footer: Footer,
    bloom: Option<BloomFilter>,
    fences: Vec<IndexKey>,
    first_ordinals: Vec<u64>,
    cache: Arc<PageCache>,
    repaired_ts: AtomicU64,
    bitmap: RwLock<Option<Arc<ValidityBitmap>>>,
    pub(crate) successor: Mutex<Option<Arc<BuildLink>>>,
    obsolete: AtomicBool,
}

impl std::fmt::Debug for DiskComponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiskComponent")
            .field("path", &self.path)
            .field("id", &self.footer.id)
            .field("entries", &self.footer.entry_count)
            .finish()
    }
}

impl DiskComponent {
    pub fn open(path: impl AsRef<Path>, cache: Arc<PageCache>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path)?;
        let file_len = file.metadata()?.len();
        if file_len < format::HEADER_LEN + format::FOOTER_LEN {
            return Err(Error::corrupt(&path, "file too short"));
        }
        let mut header = [0u8; format::HEADER_LEN as usize];
        file.read_exact_at(&mut header, 0)?;
        if &header[..4] != format::MAGIC {
            return Err(Error::corrupt(&path, "bad magic"));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != format::VERSION {
            return Err(Error::corrupt(&path, format!("unsupported version {version}")));
        }
        let footer_at = file_len - format::FOOTER_LEN;
        let mut fbuf = vec![0u8; format::FOOTER_LEN as usize];
        file.read_exact_at(&mut fbuf, footer_at)?;
        let footer = Footer::decode(&path, &fbuf)?;
        if footer.bloom_offset > footer.index_offset || footer.index_offset > footer_at {
            return Err(Error::corrupt(&path, "section offsets out of order"));
        }
        let mut tail = vec![0u8; (footer_at - footer.bloom_offset) as usize];
        file.read_exact_at(&mut tail, footer.bloom_offset)?;
        let split = (footer.index_offset - footer.bloom_offset) as usize;
        let bloom = format::decode_bloom(&path, &tail[..split])?;
        let index = format::decode_index(&path, &tail[split..])?;
        let (first_ordinals, fences) = index.into_iter().unzip();
        Ok(DiskComponent {
            file_id: cache.allocate_file_id(),
            path,
            file,
            file_len,
            repaired_ts: AtomicU64::new(footer.repaired_ts.0),
            footer,
            bloom,
            fences,
            first_ordinals,
            cache,
            bitmap: RwLock::new(None),
            successor: Mutex::new(None),
            obsolete: AtomicBool::new(false),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn bitmap_path(&self) -> PathBuf {
        self.path.with_extension("bm")
    }

    pub fn id(&self) -> ComponentId {
        self.footer.id
    }

    pub fn entry_count(&self) -> u64 {
        self.footer.entry_count
    }

    pub fn size_bytes(&self) -> u64 {
        self.file_len
    }

    pub fn page_count(&self) -> usize {
        self.fences.len()
    }

    pub fn range_filter(&self) -> RangeFilter {
        self.footer.range_filter
    }

    pub fn bloom(&self) -> Option<&BloomFilter> {
        self.bloom.as_ref()
    }

    pub fn repaired_ts(&self) -> Timestamp {
        Timestamp(self.repaired_ts.load(Ordering::Acquire))
    }

    /// Updates `repaired_ts` in memory and in the footer.
    pub fn set_repaired_ts(&self, ts: Timestamp) -> Result<()> {
        let at = self.file_len - format::FOOTER_LEN + format::REPAIRED_TS_OFFSET;
        let f = fs::OpenOptions::new().write(true).open(&self.path)?;
        f.write_all_at(&ts.0.to_le_bytes(), at)?;
        self.repaired_ts.store(ts.0, Ordering::Release);
        Ok(())
    }

    pub fn bitmap(&self) -> Option<Arc<ValidityBitmap>> {
        self.bitmap.read().clone()
    }

    /// Attaches or atomically replaces the validity bitmap.
    pub fn attach_bitmap(&self, bm: Arc<ValidityBitmap>) -> Result<()> {
        if bm.len() < self.entry_count() {
            return Err(Error::Usage(format!(
                "bitmap of {} bits for {} entries",
                bm.len(),
                self.entry_count()
            )));
        }
        *self.bitmap.write() = Some(bm);
        Ok(())
    }

    /// Loads the `.bm` sidecar if one exists.
    pub fn load_bitmap_sidecar(&self, mutability: Mutability) -> Result<bool> {
        let p = self.bitmap_path();
        if !p.exists() {
            return Ok(false);
        }
        let bm = ValidityBitmap::read_sidecar(&p, self.entry_count(), mutability)?;
        self.attach_bitmap(Arc::new(bm))?;
        Ok(true)
    }

    pub fn persist_bitmap(&self) -> Result<()> {
        if let Some(bm) = self.bitmap() {
            bm.write_sidecar(&self.bitmap_path(), self.entry_count())?;
        }
        Ok(())
    }

    pub fn bitmap_set_invalid(&self, ordinal: u64) -> Result<bool> {
        self.check_ordinal(ordinal)?;
        let bm = self
            .bitmap()
            .ok_or_else(|| Error::Usage("component has no bitmap".into()))?;
        bm.set_invalid(ordinal)
    }

    pub fn bitmap_is_valid(&self, ordinal: u64) -> Result<bool> {
        self.check_ordinal(ordinal)?;
        match self.bitmap() {
            Some(bm) => bm.is_valid(ordinal),
            None => Ok(true),
        }
    }

    fn check_ordinal(&self, ordinal: u64) -> Result<()> {
        if ordinal >= self.entry_count() {
            return Err(Error::Usage(format!(
                "ordinal {ordinal} out of range ({} entries)",
                self.entry_count()
            )));
        }
        Ok(())
    }

    pub(crate) fn mark_obsolete(&self) {
        self.obsolete.store(true, Ordering::Release);
    }

    fn read_page_raw(&self, page_no: usize) -> Result<Page> {
        let size = self.footer.page_size as usize;
        let mut buf = vec![0u8; size];
        self.file
            .read_exact_at(&mut buf, format::page_offset(page_no as u64, size as u64))?;
        Ok(Page {
            entries: format::decode_page(&self.path, &buf)?,
        })
    }

    fn cached_page(&self, page_no: usize, stats: &mut IoStats) -> Result<Arc<Page>> {
        self.cache
            .get_or_load(self.file_id, page_no as u32, stats, || self.read_page_raw(page_no))
    }

    /// Tests the Bloom filter. Components without one always pass.
    pub fn bloom_may_contain(&self, key: &IndexKey, stats: &mut IoStats) -> bool {
        match &self.bloom {
            Some(b) => {
                self.cache.record_bloom_test(stats);
                b.may_contain(key.pk)
            }
            None => true,
        }
    }

    fn locate_page(&self, key: &IndexKey, hint: Option<usize>) -> Option<usize> {
        if self.fences.is_empty() || *key < self.fences[0] {
            return None;
        }
        let p = match hint {
            Some(h) if h < self.fences.len() => {
                match search::exponential_search_by(&self.fences, h, |f| f.cmp(key)) {
                    Ok(i) => i,
                    Err(i) => i - 1,
                }
            }
            _ => self.fences.partition_point(|f| f <= key) - 1,
        };
        Some(p)
    }

    /// Looks up `key` (matter or anti-matter), ignoring bitmaps. Returns the
    /// entry with its ordinal.
    pub fn point_lookup(
        &self,
        key: &IndexKey,
        cursor: Option<&mut LookupCursor>,
        stats: &mut IoStats,
    ) -> Result<Option<(u64, IndexEntry)>> {
        if !self.bloom_may_contain(key, stats) {
            return Ok(None);
        }
        self.search_run(key, cursor, stats)
    }

    /// Searches the run without consulting the Bloom filter.
    pub fn search_run(
        &self,
        key: &IndexKey,
        cursor: Option<&mut LookupCursor>,
        stats: &mut IoStats,
    ) -> Result<Option<(u64, IndexEntry)>> {
        match cursor {
            None => {
                let Some(p) = self.locate_page(key, None) else {
                    return Ok(None);
                };
                let page = self.cached_page(p, stats)?;
                Ok(page
                    .entries
                    .binary_search_by(|e| e.key.cmp(key))
                    .ok()
                    .map(|i| (self.first_ordinals[p] + i as u64, page.entries[i].clone())))
            }
            Some(cur) => {
                let Some(p) = self.locate_page(key, cur.page_no) else {
                    return Ok(None);
                };
                let same_page = cur.page_no == Some(p) && cur.page.is_some();
                if !same_page {
                    cur.page = Some(self.cached_page(p, stats)?);
                    cur.page_no = Some(p);
                    cur.pos = 0;
                }
                let page = cur.page.as_ref().unwrap();
                let res = search::exponential_search_by(&page.entries, cur.pos, |e| e.key.cmp(key));
                match res {
                    Ok(i) => {
                        cur.pos = i;
                        Ok(Some((self.first_ordinals[p] + i as u64, page.entries[i].clone())))
                    }
                    Err(i) => {
                        cur.pos = i.min(page.entries.len().saturating_sub(1));
                        Ok(None)
                    }
                }
            }
        }
    }

    /// Sequential scan over `[lo, hi]` (inclusive; `None` = unbounded).
    pub fn scan(
        self: &Arc<Self>,
        lo: Option<IndexKey>,
        hi: Option<IndexKey>,
        bitmap: Option<Arc<ValidityBitmap>>,
    ) -> ComponentScan {
        let start_page = match &lo {
            Some(k) => self.locate_page(k, None).unwrap_or(0),
            None => 0,
        };
        ComponentScan {
            comp: self.clone(),
            page_no: start_page,
            page: None,
            pos: 0,
            lo,
            hi,
            bitmap,
            stats: IoStats::default(),
            done: self.fences.is_empty(),
        }
    }

    /// Full scan honoring the currently attached bitmap when asked to.
    pub fn scan_all(self: &Arc<Self>, honor_bitmap: bool) -> ComponentScan {
        let bm = if honor_bitmap { self.bitmap() } else { None };
        self.scan(None, None, bm)
    }
}

impl Drop for DiskComponent {
    fn drop(&mut self) {
        if self.obsolete.load(Ordering::Acquire) {
            self.cache.evict_file(self.file_id);
            let _ = fs::remove_file(&self.path);
            let _ = fs::remove_file(self.bitmap_path());
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanItem {
    pub ordinal: u64,
    pub entry: IndexEntry,
}

/// Streaming cursor over one component. Pages are read sequentially and
/// bypass the page cache.
pub struct ComponentScan {
    comp: Arc<DiskComponent>,
    page_no: usize,
    page: Option<Page>,
    pos: usize,
    lo: Option<IndexKey>,
    hi: Option<IndexKey>,
    bitmap: Option<Arc<ValidityBitmap>>,
    stats: IoStats,
    done: bool,
}

impl ComponentScan {
    pub fn stats(&self) -> IoStats {
        self.stats
    }

    pub fn component(&self) -> &Arc<DiskComponent> {
        &self.comp
    }
}

impl Iterator for ComponentScan {
    type Item = Result<ScanItem>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.done {
                return None;
            }
            if self.page.is_none() {
                if self.page_no >= self.comp.page_count() {
                    self.done = true;
                    return None;
                }
                match self.comp.read_page_raw(self.page_no) {
                    Ok(p) => {
                        self.comp.cache.record_scanned(&mut self.stats);
                        self.page = Some(p);
                        self.pos = 0;
                    }
                    Err(e) => {
                        self.done = true;
                        return Some(Err(e));
                    }
                }
            }
            let page = self.page.as_ref().unwrap();
            if self.pos >= page.entries.len() {
                self.page = None;
                self.page_no += 1;
                continue;
            }
            let i = self.pos;
            self.pos += 1;
            let e = &page.entries[i];
            if let Some(lo) = &self.lo {
                if e.key < *lo {
                    continue;
                }
            }
            if let Some(hi) = &self.hi {
                if e.key > *hi {
                    self.done = true;
                    return None;
                }
            }
            let ordinal = self.comp.first_ordinals[self.page_no] + i as u64;
            if let Some(bm) = &self.bitmap {
                if bm.is_invalid_unchecked(ordinal) {
                    continue;
                }
            }
            return Some(Ok(ScanItem {
                ordinal,
                entry: e.clone(),
            }));
        }
    }
}

#[cfg(test)]
mod tests;
