use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::component::ScanItem;
use crate::error::Result;
use crate::types::IndexEntry;

/// An entry tagged with where it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourcedEntry {
    pub entry: IndexEntry,
    /// Index into the source list; 0 is the newest source.
    pub source: usize,
    /// Ordinal within a disk component; `None` for memory entries.
    pub ordinal: Option<u64>,
}

pub type EntrySource = Box<dyn Iterator<Item = Result<(IndexEntry, Option<u64>)>> + Send>;

pub fn memory_source(entries: Vec<IndexEntry>) -> EntrySource {
    Box::new(entries.into_iter().map(|e| Ok((e, None))))
}

pub fn disk_source(scan: impl Iterator<Item = Result<ScanItem>> + Send + 'static) -> EntrySource {
    Box::new(scan.map(|r| r.map(|it| (it.entry, Some(it.ordinal)))))
}

struct HeapItem(SourcedEntry);

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    // reversed so the max-heap pops the smallest key, newest source first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .entry
            .key
            .cmp(&self.0.entry.key)
            .then(other.0.source.cmp(&self.0.source))
    }
}

/// K-way merge of sorted sources ordered newest first. With reconciliation
/// only the newest entry per key is yielded.
pub struct MergeIter {
    sources: Vec<EntrySource>,
    heap: BinaryHeap<HeapItem>,
    reconcile: bool,
    failed: bool,
    primed: bool,
}

impl MergeIter {
    pub fn new(sources: Vec<EntrySource>, reconcile: bool) -> Self {
        MergeIter {
            heap: BinaryHeap::with_capacity(sources.len()),
            sources,
            reconcile,
            failed: false,
            primed: false,
        }
    }

    fn advance(&mut self, source: usize) -> Result<()> {
        if let Some(next) = self.sources[source].next() {
            let (entry, ordinal) = next?;
            self.heap.push(HeapItem(SourcedEntry {
                entry,
                source,
                ordinal,
            }));
        }
        Ok(())
    }

    fn step(&mut self) -> Result<Option<SourcedEntry>> {
        if !self.primed {
            self.primed = true;
            for i in 0..self.sources.len() {
                self.advance(i)?;
            }
        }
        let Some(HeapItem(top)) = self.heap.pop() else {
            return Ok(None);
        };
        self.advance(top.source)?;
        if self.reconcile {
            while let Some(peek) = self.heap.peek() {
                if peek.0.entry.key != top.entry.key {
                    break;
                }
                let HeapItem(dup) = self.heap.pop().unwrap();
                self.advance(dup.source)?;
            }
        }
        Ok(Some(top))
    }
}

impl Iterator for MergeIter {
    type Item = Result<SourcedEntry>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.step() {
            Ok(v) => v.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{IndexKey, Timestamp};

    fn e(k: u64, ts: u64) -> IndexEntry {
        IndexEntry::matter(IndexKey::primary(k), vec![], Timestamp(ts))
    }

    #[test]
    fn newest_wins_when_reconciling() {
        let newer = memory_source(vec![e(1, 10), e(3, 11)]);
        let older = memory_source(vec![e(1, 1), e(2, 2), e(3, 3)]);
        let out: Vec<_> = MergeIter::new(vec![newer, older], true)
            .map(|r| r.unwrap())
            .map(|s| (s.entry.key.pk.0, s.entry.ts.0, s.source))
            .collect();
        assert_eq!(out, vec![(1, 10, 0), (2, 2, 1), (3, 11, 0)]);
    }

    #[test]
    fn without_reconciliation_everything_is_yielded() {
        let newer = memory_source(vec![e(1, 10)]);
        let older = memory_source(vec![e(1, 1), e(2, 2)]);
        let out: Vec<_> = MergeIter::new(vec![newer, older], false)
            .map(|r| r.unwrap().entry.ts.0)
            .collect();
        assert_eq!(out, vec![10, 1, 2]);
    }
}
