//! Per-entry validity bitmaps. A set bit marks the entry at that ordinal as
//! invalid.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutability {
    /// Produced by secondary-index repair; sealed once attached.
    Immutable,
    /// Mutated in place by deletes under the mutable-bitmap strategy.
    Mutable,
}

#[derive(Debug)]
pub struct ValidityBitmap {
    words: Box<[AtomicU64]>,
    len: u64,
    mutability: Mutability,
}

impl ValidityBitmap {
    pub fn new(len: u64, mutability: Mutability) -> Self {
        let n = len.div_ceil(64) as usize;
        ValidityBitmap {
            words: (0..n).map(|_| AtomicU64::new(0)).collect(),
            len,
            mutability,
        }
    }

    /// Builds an immutable bitmap with the given ordinals marked invalid.
    pub fn immutable_from_invalid(len: u64, invalid: impl IntoIterator<Item = u64>) -> Self {
        let bm = ValidityBitmap::new(len, Mutability::Immutable);
        for ord in invalid {
            assert!(ord < len, "ordinal {ord} out of range {len}");
            bm.raw_set(ord);
        }
        bm
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn mutability(&self) -> Mutability {
        self.mutability
    }

    fn check(&self, ordinal: u64) -> Result<()> {
        if ordinal >= self.len {
            return Err(Error::Usage(format!(
                "bitmap ordinal {ordinal} out of range (len {})",
                self.len
            )));
        }
        Ok(())
    }

    #[inline]
    fn raw_set(&self, ordinal: u64) -> bool {
        let mask = 1u64 << (ordinal % 64);
        let prev = self.words[(ordinal / 64) as usize].fetch_or(mask, Ordering::AcqRel);
        prev & mask == 0
    }

    /// Marks `ordinal` invalid. Returns whether the bit changed.
    pub fn set_invalid(&self, ordinal: u64) -> Result<bool> {
        self.check(ordinal)?;
        if self.mutability == Mutability::Immutable {
            return Err(Error::Usage("cannot mutate an immutable bitmap".into()));
        }
        Ok(self.raw_set(ordinal))
    }

    /// Reverts a bit to valid. Only the build protocols use this.
    #[allow(dead_code)]
    pub(crate) fn unset(&self, ordinal: u64) -> Result<()> {
        self.check(ordinal)?;
        let mask = !(1u64 << (ordinal % 64));
        self.words[(ordinal / 64) as usize].fetch_and(mask, Ordering::AcqRel);
        Ok(())
    }

    pub fn is_valid(&self, ordinal: u64) -> Result<bool> {
        self.check(ordinal)?;
        Ok(!self.is_invalid_unchecked(ordinal))
    }

    #[inline]
    pub(crate) fn is_invalid_unchecked(&self, ordinal: u64) -> bool {
        let w = self.words[(ordinal / 64) as usize].load(Ordering::Acquire);
        w & (1 << (ordinal % 64)) != 0
    }

    pub fn count_invalid(&self) -> u64 {
        self.words
            .iter()
            .map(|w| w.load(Ordering::Acquire).count_ones() as u64)
            .sum()
    }

    pub fn invalid_ordinals(&self) -> Vec<u64> {
        (0..self.len)
            .filter(|&i| self.is_invalid_unchecked(i))
            .collect()
    }

    /// Point-in-time immutable copy.
    pub fn snapshot(&self) -> ValidityBitmap {
        ValidityBitmap {
            words: self
                .words
                .iter()
                .map(|w| AtomicU64::new(w.load(Ordering::Acquire)))
                .collect(),
            len: self.len,
            mutability: Mutability::Immutable,
        }
    }

    /// Bitwise union of two bitmaps of equal length, as an immutable bitmap.
    pub fn union(&self, other: &ValidityBitmap) -> ValidityBitmap {
        assert_eq!(self.len, other.len);
        ValidityBitmap {
            words: self
                .words
                .iter()
                .zip(other.words.iter())
                .map(|(a, b)| AtomicU64::new(a.load(Ordering::Acquire) | b.load(Ordering::Acquire)))
                .collect(),
            len: self.len,
            mutability: Mutability::Immutable,
        }
    }

    /// Raw bit array, LSB-first within each byte, `ceil(entries / 8)` bytes.
    pub fn to_bytes(&self, entries: u64) -> Vec<u8> {
        let n = entries.min(self.len).div_ceil(8) as usize;
        let mut out = Vec::with_capacity(n);
        for w in self.words.iter() {
            out.extend_from_slice(&w.load(Ordering::Acquire).to_le_bytes());
        }
        out.truncate(n);
        if entries % 8 != 0 && n > 0 {
            out[n - 1] &= (1u8 << (entries % 8)) - 1;
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], len: u64, mutability: Mutability) -> Result<Self> {
        if bytes.len() as u64 != len.div_ceil(8) {
            return Err(Error::Usage(format!(
                "bitmap sidecar has {} bytes, expected {}",
                bytes.len(),
                len.div_ceil(8)
            )));
        }
        let bm = ValidityBitmap::new(len, mutability);
        for (i, &b) in bytes.iter().enumerate() {
            for bit in 0..8 {
                let ord = i as u64 * 8 + bit;
                if b & (1 << bit) != 0 && ord < len {
                    bm.raw_set(ord);
                }
            }
        }
        Ok(bm)
    }

    pub fn write_sidecar(&self, path: &Path, entries: u64) -> Result<()> {
        let tmp = path.with_extension("bm.tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&self.to_bytes(entries))?;
        drop(f);
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn read_sidecar(path: &Path, entries: u64, mutability: Mutability) -> Result<Self> {
        let bytes = fs::read(path)?;
        ValidityBitmap::from_bytes(&bytes, entries, mutability)
    }
}
