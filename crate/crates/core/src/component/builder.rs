use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::format::{self, Footer};
use super::DiskComponent;
use crate::bloom::{BloomConfig, BloomFilter};
use crate::error::{Error, Result};
use crate::pager::PageCache;
use crate::types::{ComponentId, IndexEntry, IndexKey, PrimaryKey, RangeFilter, Timestamp};

pub const DEFAULT_PAGE_SIZE: usize = 128 * 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentConfig {
    pub page_size: usize,
    /// Bloom filter over primary keys; `None` for secondary indexes.
    pub bloom: Option<BloomConfig>,
}

impl Default for ComponentConfig {
    fn default() -> Self {
        ComponentConfig {
            page_size: DEFAULT_PAGE_SIZE,
            bloom: Some(BloomConfig::standard()),
        }
    }
}

/// Streams sorted entries into a new component file.
pub struct ComponentBuilder {
    path: PathBuf,
    config: ComponentConfig,
    out: BufWriter<File>,
    body: Vec<u8>,
    offsets: Vec<u32>,
    fences: Vec<(u64, IndexKey)>,
    last: Option<IndexKey>,
    count: u64,
    bloom_keys: Vec<PrimaryKey>,
    filter: RangeFilter,
    pages: u64,
    finished: bool,
}

impl ComponentBuilder {
    pub fn create(path: impl Into<PathBuf>, config: ComponentConfig) -> Result<Self> {
        let path = path.into();
        if config.page_size < 64 {
            return Err(Error::config("page_size", "must be at least 64 bytes"));
        }
        let mut out = BufWriter::new(File::create(&path)?);
        out.write_all(&format::encode_header())?;
        Ok(ComponentBuilder {
            path,
            config,
            out,
            body: Vec::new(),
            offsets: Vec::new(),
            fences: Vec::new(),
            last: None,
            count: 0,
            bloom_keys: Vec::new(),
            filter: RangeFilter::empty(),
            pages: 0,
            finished: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn entry_count(&self) -> u64 {
        self.count
    }

    pub fn last_key(&self) -> Option<&IndexKey> {
        self.last.as_ref()
    }

    /// Appends an entry and returns its ordinal.
    pub fn add(&mut self, e: &IndexEntry) -> Result<u64> {
        if let Some(last) = &self.last {
            if e.key <= *last {
                return Err(Error::Build(format!(
                    "input not strictly sorted: {:?} after {:?}",
                    e.key, last
                )));
            }
        }
        if e.anti_matter && !e.payload.is_empty() {
            return Err(Error::Build("anti-matter entry with a payload".into()));
        }
        let len = format::entry_encoded_len(e);
        if 4 + 4 + len > self.config.page_size {
            return Err(Error::Build(format!(
                "entry of {len} bytes does not fit a {}-byte page",
                self.config.page_size
            )));
        }
        let used = 4 + 4 * self.offsets.len() + self.body.len();
        if !self.offsets.is_empty() && used + 4 + len > self.config.page_size {
            self.flush_page()?;
        }
        if self.offsets.is_empty() {
            self.fences.push((self.count, e.key.clone()));
        }
        self.offsets.push(self.body.len() as u32);
        format::encode_entry(e, &mut self.body);
        if self.config.bloom.is_some() {
            self.bloom_keys.push(e.key.pk);
        }
        self.last = Some(e.key.clone());
        let ordinal = self.count;
        self.count += 1;
        Ok(ordinal)
    }

    pub fn widen_filter(&mut self, v: i64) {
        self.filter.widen(v);
    }

    pub fn union_filter(&mut self, f: &RangeFilter) {
        self.filter.union(f);
    }

    fn flush_page(&mut self) -> Result<()> {
        let page = format::assemble_page(&self.body, &self.offsets, self.config.page_size);
        self.out.write_all(&page)?;
        self.body.clear();
        self.offsets.clear();
        self.pages += 1;
        Ok(())
    }

    /// Writes filters, index and footer, then opens the sealed component.
    pub fn finish(
        mut self,
        id: ComponentId,
        repaired_ts: Timestamp,
        cache: &Arc<PageCache>,
    ) -> Result<DiskComponent> {
        if !self.offsets.is_empty() {
            self.flush_page()?;
        }
        let bloom_offset = format::page_offset(self.pages, self.config.page_size as u64);
        let bloom = self
            .config
            .bloom
            .map(|cfg| BloomFilter::build(&cfg, &self.bloom_keys));
        let mut tail = Vec::new();
        format::encode_bloom(bloom.as_ref(), &mut tail);
        let index_offset = bloom_offset + tail.len() as u64;
        format::encode_index(&self.fences, &mut tail);
        let footer = Footer {
            entry_count: self.count,
            range_filter: self.filter,
            id,
            repaired_ts,
            bloom_offset,
            index_offset,
            page_size: self.config.page_size as u32,
        };
        tail.extend_from_slice(&footer.encode());
        self.out.write_all(&tail)?;
        self.out.flush()?;
        cache.record_written(self.pages);
        self.finished = true;
        DiskComponent::open(&self.path, cache.clone())
    }
}

impl Drop for ComponentBuilder {
    fn drop(&mut self) {
        if !self.finished {
            let _ = fs::remove_file(&self.path);
        }
    }
}

/// Builds a component from an already sorted entry stream.
pub fn build_component<'a>(
    path: impl Into<PathBuf>,
    entries: impl IntoIterator<Item = &'a IndexEntry>,
    config: ComponentConfig,
    id: ComponentId,
    cache: &Arc<PageCache>,
    filter_key: impl Fn(&IndexEntry) -> Option<i64>,
) -> Result<DiskComponent> {
    let mut b = ComponentBuilder::create(path, config)?;
    for e in entries {
        b.add(e)?;
        if !e.anti_matter {
            if let Some(v) = filter_key(e) {
                b.widen_filter(v);
            }
        }
    }
    b.finish(id, id.max_ts, cache)
}
