//! External sort of (primary key, timestamp, position) triples.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub pk: u64,
    pub ts: u64,
    pub pos: u64,
}

const TRIPLE_BYTES: usize = 24;

impl Triple {
    fn encode(&self, out: &mut [u8; TRIPLE_BYTES]) {
        out[..8].copy_from_slice(&self.pk.to_le_bytes());
        out[8..16].copy_from_slice(&self.ts.to_le_bytes());
        out[16..].copy_from_slice(&self.pos.to_le_bytes());
    }

    fn decode(b: &[u8; TRIPLE_BYTES]) -> Triple {
        let word = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        Triple {
            pk: word(0),
            ts: word(8),
            pos: word(16),
        }
    }
}

static RUN_SEQ: AtomicU64 = AtomicU64::new(0);

/// Sorts in memory up to a byte budget, then spills sorted runs and merges
/// them on read.
pub struct ExternalSorter {
    dir: PathBuf,
    max_items: usize,
    buf: Vec<Triple>,
    runs: Vec<PathBuf>,
    count: u64,
}

impl ExternalSorter {
    pub fn new(dir: impl Into<PathBuf>, memory_bytes: usize) -> Self {
        ExternalSorter {
            dir: dir.into(),
            max_items: (memory_bytes / TRIPLE_BYTES).max(1),
            buf: Vec::new(),
            runs: Vec::new(),
            count: 0,
        }
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn spilled_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn push(&mut self, t: Triple) -> Result<()> {
        self.buf.push(t);
        self.count += 1;
        if self.buf.len() >= self.max_items {
            self.spill()?;
        }
        Ok(())
    }

    fn spill(&mut self) -> Result<()> {
        self.buf.sort_unstable();
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(format!(
            "sort-{}-{}.run",
            std::process::id(),
            RUN_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        let mut w = BufWriter::new(File::create(&path)?);
        let mut rec = [0u8; TRIPLE_BYTES];
        for t in self.buf.drain(..) {
            t.encode(&mut rec);
            w.write_all(&rec)?;
        }
        w.flush()?;
        self.runs.push(path);
        Ok(())
    }

    pub fn finish(mut self) -> Result<SortedTriples> {
        if self.runs.is_empty() {
            let mut buf = std::mem::take(&mut self.buf);
            buf.sort_unstable();
            return Ok(SortedTriples::Memory(buf.into_iter()));
        }
        if !self.buf.is_empty() {
            self.spill()?;
        }
        let runs = std::mem::take(&mut self.runs);
        let mut readers = Vec::with_capacity(runs.len());
        let mut heap = BinaryHeap::new();
        for (i, p) in runs.iter().enumerate() {
            let mut r = BufReader::new(File::open(p)?);
            if let Some(t) = read_triple(&mut r)? {
                heap.push(Reverse((t, i)));
            }
            readers.push(r);
        }
        Ok(SortedTriples::Runs(RunMerge {
            readers,
            heap,
            paths: runs,
        }))
    }
}

impl Drop for ExternalSorter {
    fn drop(&mut self) {
        remove_all(&self.runs);
    }
}

fn remove_all(paths: &[PathBuf]) {
    for p in paths {
        let _ = fs::remove_file(p);
    }
}

fn read_triple(r: &mut impl Read) -> Result<Option<Triple>> {
    let mut rec = [0u8; TRIPLE_BYTES];
    match r.read_exact(&mut rec) {
        Ok(()) => Ok(Some(Triple::decode(&rec))),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub struct RunMerge {
    readers: Vec<BufReader<File>>,
    heap: BinaryHeap<Reverse<(Triple, usize)>>,
    paths: Vec<PathBuf>,
}

impl Drop for RunMerge {
    fn drop(&mut self) {
        remove_all(&self.paths);
    }
}

pub enum SortedTriples {
    Memory(std::vec::IntoIter<Triple>),
    Runs(RunMerge),
}

impl Iterator for SortedTriples {
    type Item = Result<Triple>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            SortedTriples::Memory(it) => it.next().map(Ok),
            SortedTriples::Runs(m) => {
                let Reverse((t, i)) = m.heap.pop()?;
                match read_triple(&mut m.readers[i]) {
                    Ok(Some(next)) => m.heap.push(Reverse((next, i))),
                    Ok(None) => {}
                    Err(e) => return Some(Err(e)),
                }
                Some(Ok(t))
            }
        }
    }
}

/// Scratch directory for sort runs below a dataset root.
pub fn scratch_dir(root: &Path) -> PathBuf {
    root.join("tmp")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sorted_via(limit: usize, input: &[Triple]) -> (Vec<Triple>, usize) {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ExternalSorter::new(dir.path(), limit);
        for t in input {
            s.push(*t).unwrap();
        }
        let runs = s.spilled_runs();
        let out = s.finish().unwrap().map(|r| r.unwrap()).collect();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        (out, runs)
    }

    #[test]
    fn empty_input() {
        assert!(sorted_via(1 << 20, &[]).0.is_empty());
    }

    proptest! {
        #[test]
        fn spilling_matches_in_memory_sort(raw in proptest::collection::vec((0u64..50, 0u64..1000, 0u64..5000), 0..400)) {
            let input: Vec<Triple> = raw.iter().map(|&(pk, ts, pos)| Triple { pk, ts, pos }).collect();
            let mut expect = input.clone();
            expect.sort();
            let (small, runs) = sorted_via(TRIPLE_BYTES * 16, &input);
            prop_assert_eq!(&small, &expect);
            prop_assert!(input.len() < 16 || runs > 0);
            prop_assert_eq!(sorted_via(1 << 20, &input).0, expect);
        }
    }
}
