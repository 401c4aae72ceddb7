//! On-disk layout of a component file (all integers little-endian):
//!
//! ```text
//! header  : "LSMC" | version u16
//! pages   : page_count fixed-size data pages
//!           count u32 | offset u32 * count | entries
//!           entry = flags u8 | key_len u32 | key | payload_len u32 | payload | [ts u64]
//! bloom   : mode u8 (0 = none) | hash_count u8 | num_bits u64 | words u64 * (num_bits / 64)
//! index   : page_count u32 | (first_ordinal u64 | key_len u32 | first key) * page_count
//! footer  : entry_count u64 | filter_present u8 | filter_min i64 | filter_max i64
//!           | min_ts u64 | max_ts u64 | repaired_ts u64
//!           | bloom_offset u64 | index_offset u64 | page_size u32
//! ```

use std::path::Path;

use crate::bloom::{BloomFilter, BloomMode};
use crate::error::{Error, Result};
use crate::types::{ComponentId, IndexEntry, IndexKey, RangeFilter, Timestamp};

pub const MAGIC: &[u8; 4] = b"LSMC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 6;
pub const FOOTER_LEN: u64 = 69;
/// Offset of `repaired_ts` inside the footer.
pub const REPAIRED_TS_OFFSET: u64 = 41;

pub const FLAG_ANTI_MATTER: u8 = 0x01;
pub const FLAG_TIMESTAMP: u8 = 0x02;

pub fn page_offset(page_no: u64, page_size: u64) -> u64 {
    HEADER_LEN + page_no * page_size
}

pub fn encode_header() -> [u8; HEADER_LEN as usize] {
    let mut h = [0u8; HEADER_LEN as usize];
    h[..4].copy_from_slice(MAGIC);
    h[4..].copy_from_slice(&VERSION.to_le_bytes());
    h
}

pub fn entry_encoded_len(e: &IndexEntry) -> usize {
    1 + 4 + e.key.encoded_len() + 4 + e.payload.len() + if e.ts.is_none() { 0 } else { 8 }
}

pub fn encode_entry(e: &IndexEntry, out: &mut Vec<u8>) {
    let mut flags = 0;
    if e.anti_matter {
        flags |= FLAG_ANTI_MATTER;
    }
    if !e.ts.is_none() {
        flags |= FLAG_TIMESTAMP;
    }
    out.push(flags);
    out.extend_from_slice(&(e.key.encoded_len() as u32).to_le_bytes());
    e.key.encode_into(out);
    out.extend_from_slice(&(e.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&e.payload);
    if !e.ts.is_none() {
        out.extend_from_slice(&e.ts.0.to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn at(buf: &'a [u8], pos: usize) -> Self {
        Reader { buf, pos }
    }

    pub fn bytes(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    pub fn u8(&mut self) -> Option<u8> {
        self.bytes(1).map(|b| b[0])
    }

    pub fn u32(&mut self) -> Option<u32> {
        self.bytes(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Option<u64> {
        self.bytes(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Option<i64> {
        self.bytes(8).map(|b| i64::from_le_bytes(b.try_into().unwrap()))
    }
}

fn decode_entry(r: &mut Reader<'_>) -> Option<IndexEntry> {
    let flags = r.u8()?;
    let klen = r.u32()? as usize;
    let key = IndexKey::decode(r.bytes(klen)?)?;
    let plen = r.u32()? as usize;
    let payload = r.bytes(plen)?.to_vec();
    let ts = if flags & FLAG_TIMESTAMP != 0 {
        Timestamp(r.u64()?)
    } else {
        Timestamp::NONE
    };
    Some(IndexEntry {
        key,
        payload,
        anti_matter: flags & FLAG_ANTI_MATTER != 0,
        ts,
    })
}

/// Serializes already-encoded entries into one page image.
pub fn assemble_page(entries: &[u8], offsets: &[u32], page_size: usize) -> Vec<u8> {
    let header = 4 + 4 * offsets.len();
    let mut page = Vec::with_capacity(page_size);
    page.extend_from_slice(&(offsets.len() as u32).to_le_bytes());
    for off in offsets {
        page.extend_from_slice(&(header as u32 + off).to_le_bytes());
    }
    page.extend_from_slice(entries);
    debug_assert!(page.len() <= page_size);
    page.resize(page_size, 0);
    page
}

pub fn decode_page(path: &Path, buf: &[u8]) -> Result<Vec<IndexEntry>> {
    let bad = |why: &str| Error::corrupt(path, why.to_string());
    let mut r = Reader::new(buf);
    let count = r.u32().ok_or_else(|| bad("truncated page header"))? as usize;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let off = Reader::at(buf, 4 + 4 * i)
            .u32()
            .ok_or_else(|| bad("truncated offset table"))? as usize;
        let e = decode_entry(&mut Reader::at(buf, off)).ok_or_else(|| bad("truncated entry"))?;
        entries.push(e);
    }
    Ok(entries)
}

pub fn encode_bloom(bloom: Option<&BloomFilter>, out: &mut Vec<u8>) {
    match bloom {
        None => {
            out.push(0);
            out.push(0);
            out.extend_from_slice(&0u64.to_le_bytes());
        }
        Some(b) => {
            out.push(b.mode().to_byte());
            out.push(b.hash_count());
            out.extend_from_slice(&b.num_bits().to_le_bytes());
            for w in b.words() {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
    }
}

pub fn decode_bloom(path: &Path, buf: &[u8]) -> Result<Option<BloomFilter>> {
    let bad = || Error::corrupt(path, "truncated bloom section");
    let mut r = Reader::new(buf);
    let mode = r.u8().ok_or_else(bad)?;
    let hash_count = r.u8().ok_or_else(bad)?;
    let num_bits = r.u64().ok_or_else(bad)?;
    if mode == 0 {
        return Ok(None);
    }
    let mode = BloomMode::from_byte(mode).ok_or_else(|| Error::corrupt(path, "unknown bloom mode"))?;
    let words = (0..num_bits / 64)
        .map(|_| r.u64())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(bad)?;
    Ok(Some(BloomFilter::from_parts(mode, hash_count, num_bits, words)))
}

pub fn encode_index(fences: &[(u64, IndexKey)], out: &mut Vec<u8>) {
    out.extend_from_slice(&(fences.len() as u32).to_le_bytes());
    for (ordinal, key) in fences {
        out.extend_from_slice(&ordinal.to_le_bytes());
        out.extend_from_slice(&(key.encoded_len() as u32).to_le_bytes());
        key.encode_into(out);
    }
}

pub fn decode_index(path: &Path, buf: &[u8]) -> Result<Vec<(u64, IndexKey)>> {
    let bad = || Error::corrupt(path, "truncated index section");
    let mut r = Reader::new(buf);
    let n = r.u32().ok_or_else(bad)? as usize;
    let mut fences = Vec::with_capacity(n);
    for _ in 0..n {
        let ord = r.u64().ok_or_else(bad)?;
        let klen = r.u32().ok_or_else(bad)? as usize;
        let key = IndexKey::decode(r.bytes(klen).ok_or_else(bad)?).ok_or_else(bad)?;
        fences.push((ord, key));
    }
    Ok(fences)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Footer {
    pub entry_count: u64,
    pub range_filter: RangeFilter,
    pub id: ComponentId,
    pub repaired_ts: Timestamp,
    pub bloom_offset: u64,
    pub index_offset: u64,
    pub page_size: u32,
}

impl Footer {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FOOTER_LEN as usize);
        out.extend_from_slice(&self.entry_count.to_le_bytes());
        let (present, lo, hi) = match self.range_filter.bounds() {
            Some((lo, hi)) => (1u8, lo, hi),
            None => (0, 0, 0),
        };
        out.push(present);
        out.extend_from_slice(&lo.to_le_bytes());
        out.extend_from_slice(&hi.to_le_bytes());
        out.extend_from_slice(&self.id.min_ts.0.to_le_bytes());
        out.extend_from_slice(&self.id.max_ts.0.to_le_bytes());
        out.extend_from_slice(&self.repaired_ts.0.to_le_bytes());
        out.extend_from_slice(&self.bloom_offset.to_le_bytes());
        out.extend_from_slice(&self.index_offset.to_le_bytes());
        out.extend_from_slice(&self.page_size.to_le_bytes());
        debug_assert_eq!(out.len() as u64, FOOTER_LEN);
        out
    }

    pub fn decode(path: &Path, buf: &[u8]) -> Result<Footer> {
        let bad = || Error::corrupt(path, "truncated footer");
        let mut r = Reader::new(buf);
        let entry_count = r.u64().ok_or_else(bad)?;
        let present = r.u8().ok_or_else(bad)?;
        let lo = r.i64().ok_or_else(bad)?;
        let hi = r.i64().ok_or_else(bad)?;
        let min_ts = r.u64().ok_or_else(bad)?;
        let max_ts = r.u64().ok_or_else(bad)?;
        let repaired_ts = r.u64().ok_or_else(bad)?;
        let bloom_offset = r.u64().ok_or_else(bad)?;
        let index_offset = r.u64().ok_or_else(bad)?;
        let page_size = r.u32().ok_or_else(bad)?;
        if min_ts > max_ts {
            return Err(Error::corrupt(path, "component id min > max"));
        }
        Ok(Footer {
            entry_count,
            range_filter: if present == 1 {
                RangeFilter::new(lo, hi)
            } else {
                RangeFilter::empty()
            },
            id: ComponentId::new(min_ts, max_ts),
            repaired_ts: Timestamp(repaired_ts),
            bloom_offset,
            index_offset,
            page_size,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_roundtrip_with_and_without_timestamp() {
        let entries = vec![
            IndexEntry::matter(IndexKey::primary(101), b"CA,2015".to_vec(), Timestamp::NONE),
            IndexEntry::anti_matter(IndexKey::secondary(b"CA".to_vec(), 101), Timestamp(4)),
        ];
        let mut body = Vec::new();
        let mut offsets = Vec::new();
        for e in &entries {
            offsets.push(body.len() as u32);
            encode_entry(e, &mut body);
            assert_eq!(entry_encoded_len(e), body.len() - *offsets.last().unwrap() as usize);
        }
        let page = assemble_page(&body, &offsets, 256);
        assert_eq!(page.len(), 256);
        let back = decode_page(Path::new("x"), &page).unwrap();
        assert_eq!(back, entries);
    }

    #[test]
    fn footer_layout() {
        let f = Footer {
            entry_count: 2,
            range_filter: RangeFilter::new(2015, 2016),
            id: ComponentId::new(16, 18),
            repaired_ts: Timestamp(18),
            bloom_offset: 1000,
            index_offset: 2000,
            page_size: 4096,
        };
        let bytes = f.encode();
        assert_eq!(bytes.len() as u64, FOOTER_LEN);
        let rts = &bytes[REPAIRED_TS_OFFSET as usize..REPAIRED_TS_OFFSET as usize + 8];
        assert_eq!(u64::from_le_bytes(rts.try_into().unwrap()), 18);
        assert_eq!(Footer::decode(Path::new("x"), &bytes).unwrap(), f);
    }
}
