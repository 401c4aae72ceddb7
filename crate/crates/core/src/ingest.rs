//! Write paths of the three maintenance strategies.

use crate::concurrency;
use crate::dataset::{Dataset, SecondaryMaintenance, StrategyKind, UniquenessIndex};
use crate::error::Result;
use crate::pager::IoStats;
use crate::record::Record;
use crate::tree::{Found, Location};
use crate::types::{IndexEntry, IndexKey, PrimaryKey, Timestamp};

enum Op {
    Insert(Record),
    Delete(PrimaryKey),
    Upsert(Record),
}

impl Op {
    fn key(&self) -> PrimaryKey {
        match self {
            Op::Insert(r) | Op::Upsert(r) => r.key,
            Op::Delete(k) => *k,
        }
    }
}

impl Dataset {
    /// Inserts a record unless its key already exists.
    pub fn insert(&self, rec: Record) -> Result<bool> {
        self.config().schema.validate(&rec)?;
        self.apply(Op::Insert(rec))
    }

    /// Deletes a record. Returns whether it existed, as far as the strategy
    /// can tell: the validation strategy never looks and reports true.
    pub fn delete(&self, key: impl Into<PrimaryKey>) -> Result<bool> {
        self.apply(Op::Delete(key.into()))
    }

    /// Inserts or replaces a record.
    pub fn upsert(&self, rec: Record) -> Result<()> {
        self.config().schema.validate(&rec)?;
        self.apply(Op::Upsert(rec)).map(|_| ())
    }

    fn apply(&self, op: Op) -> Result<bool> {
        let mut stats = IoStats::default();
        let res = {
            let _shared = self.dataset_shared();
            let _key = self.locks().exclusive(op.key());
            match self.strategy().kind {
                StrategyKind::Eager => self.apply_eager(op, &mut stats),
                StrategyKind::Validation => self.apply_validation(op, &mut stats),
                StrategyKind::MutableBitmap => self.apply_mutable(op, &mut stats),
            }
        };
        self.add_ingest_stats(&stats);
        let applied = res?;
        self.maybe_maintain()?;
        Ok(applied)
    }

    fn entry_ts(&self, ts: Timestamp) -> Timestamp {
        if self.strategy().timestamped() {
            ts
        } else {
            Timestamp::NONE
        }
    }

    fn put(&self, tree: &crate::tree::LsmTree, e: IndexEntry) {
        self.charge_memory(e.accounted_size());
        tree.upsert_entry(e);
    }

    fn widen_filter(&self, rec: &Record) -> Result<()> {
        if let Some(v) = self.schema().extract_filter_key(rec)? {
            self.primary().widen_memory_filter(v);
        }
        Ok(())
    }

    fn put_record(&self, rec: &Record, ts: Timestamp) {
        let ets = self.entry_ts(ts);
        self.put(
            self.primary(),
            IndexEntry::matter(IndexKey::primary(rec.key), rec.encode(), ets),
        );
        self.put(
            self.pk_index(),
            IndexEntry::matter(IndexKey::primary(rec.key), Vec::new(), ets),
        );
        for (i, t) in self.secondaries().iter().enumerate() {
            let sk = self.schema().secondary_key(i, rec);
            self.put(t, IndexEntry::matter(IndexKey::secondary(sk, rec.key), Vec::new(), ets));
        }
    }

    fn put_primary_anti_matter(&self, key: PrimaryKey, ts: Timestamp) {
        let ets = self.entry_ts(ts);
        self.put(self.primary(), IndexEntry::anti_matter(IndexKey::primary(key), ets));
        self.put(self.pk_index(), IndexEntry::anti_matter(IndexKey::primary(key), ets));
    }

    /// Anti-matter for the secondary entries of `old` whose key differs from
    /// `new` (all of them when `new` is absent).
    fn put_secondary_anti_matter(&self, old: &Record, new: Option<&Record>, ts: Timestamp) {
        let ets = self.entry_ts(ts);
        for (i, t) in self.secondaries().iter().enumerate() {
            let old_key = self.schema().secondary_key(i, old);
            if new.is_some_and(|n| self.schema().secondary_key(i, n) == old_key) {
                continue;
            }
            self.put(t, IndexEntry::anti_matter(IndexKey::secondary(old_key, old.key), ets));
        }
    }

    fn live_record(&self, key: PrimaryKey, stats: &mut IoStats) -> Result<Option<Record>> {
        match self.primary().lookup(&IndexKey::primary(key), stats)? {
            Some(f) if f.is_live() => Ok(Some(Record::decode(key, &f.entry.payload)?)),
            _ => Ok(None),
        }
    }

    fn key_exists(&self, key: PrimaryKey, stats: &mut IoStats) -> Result<bool> {
        let tree = match self.strategy().uniqueness {
            UniquenessIndex::PrimaryKey => self.pk_index(),
            UniquenessIndex::Primary => self.primary(),
        };
        Ok(tree
            .lookup(&IndexKey::primary(key), stats)?
            .is_some_and(|f| f.is_live()))
    }

    /// The old version, when it still sits in the primary memory component.
    fn memory_resident_record(&self, key: PrimaryKey) -> Result<Option<Record>> {
        match self.primary().memory_get(&IndexKey::primary(key)) {
            Some(e) if !e.anti_matter => Ok(Some(Record::decode(key, &e.payload)?)),
            _ => Ok(None),
        }
    }

    fn apply_eager(&self, op: Op, stats: &mut IoStats) -> Result<bool> {
        match op {
            Op::Insert(rec) => {
                if self.key_exists(rec.key, stats)? {
                    return Ok(false);
                }
                let ts = self.next_ts();
                self.put_record(&rec, ts);
                self.widen_filter(&rec)?;
                Ok(true)
            }
            Op::Delete(key) => {
                let Some(old) = self.live_record(key, stats)? else {
                    return Ok(false);
                };
                let ts = self.next_ts();
                self.put_primary_anti_matter(key, ts);
                self.put_secondary_anti_matter(&old, None, ts);
                self.widen_filter(&old)?;
                Ok(true)
            }
            Op::Upsert(rec) => {
                let old = self.live_record(rec.key, stats)?;
                let ts = self.next_ts();
                if let Some(old) = &old {
                    self.put_secondary_anti_matter(old, Some(&rec), ts);
                    self.widen_filter(old)?;
                }
                self.put_record(&rec, ts);
                self.widen_filter(&rec)?;
                Ok(true)
            }
        }
    }

    fn apply_validation(&self, op: Op, stats: &mut IoStats) -> Result<bool> {
        match op {
            Op::Insert(rec) => {
                if self.key_exists(rec.key, stats)? {
                    return Ok(false);
                }
                let ts = self.next_ts();
                self.put_record(&rec, ts);
                self.widen_filter(&rec)?;
                Ok(true)
            }
            Op::Delete(key) => {
                let old = self.memory_resident_record(key)?;
                let ts = self.next_ts();
                if let Some(old) = &old {
                    self.put_secondary_anti_matter(old, None, ts);
                }
                self.put_primary_anti_matter(key, ts);
                Ok(true)
            }
            Op::Upsert(rec) => {
                let old = self.memory_resident_record(rec.key)?;
                let ts = self.next_ts();
                if let Some(old) = &old {
                    self.put_secondary_anti_matter(old, Some(&rec), ts);
                }
                self.put_record(&rec, ts);
                self.widen_filter(&rec)?;
                Ok(true)
            }
        }
    }

    fn locate_live(&self, key: PrimaryKey, stats: &mut IoStats) -> Result<Option<Found>> {
        Ok(self
            .pk_index()
            .lookup(&IndexKey::primary(key), stats)?
            .filter(|f| f.is_live()))
    }

    /// Old version needed to maintain secondaries of an existing record.
    fn old_for_secondaries(&self, found: &Found, stats: &mut IoStats) -> Result<Option<Record>> {
        let key = found.entry.pk();
        match self.strategy().mb_secondary {
            SecondaryMaintenance::Eager => self.live_record(key, stats),
            SecondaryMaintenance::Validation => self.memory_resident_record(key),
        }
    }

    fn apply_mutable(&self, op: Op, stats: &mut IoStats) -> Result<bool> {
        let key = op.key();
        let found = self.locate_live(key, stats)?;
        if let Op::Insert(_) = op {
            if found.is_some() {
                return Ok(false);
            }
        }
        if let (Op::Delete(_), None) = (&op, &found) {
            return Ok(false);
        }
        let old = match &found {
            Some(f) => self.old_for_secondaries(f, stats)?,
            None => None,
        };
        if let Some(Found {
            location: Location::Disk { component, ordinal },
            ..
        }) = &found
        {
            concurrency::invalidate(self, component, *ordinal, key)?;
        }
        let ts = self.next_ts();
        match op {
            Op::Delete(_) => {
                if let Some(old) = &old {
                    self.put_secondary_anti_matter(old, None, ts);
                }
                self.put_primary_anti_matter(key, ts);
            }
            Op::Insert(rec) | Op::Upsert(rec) => {
                if let Some(old) = &old {
                    self.put_secondary_anti_matter(old, Some(&rec), ts);
                }
                self.put_record(&rec, ts);
                self.widen_filter(&rec)?;
            }
        }
        Ok(true)
    }
}
