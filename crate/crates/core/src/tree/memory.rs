use std::collections::BTreeMap;
use std::ops::Bound;

use crate::types::{ComponentId, IndexEntry, IndexKey, RangeFilter, Timestamp};

#[derive(Clone, Debug, PartialEq, Eq)]
struct MemValue {
    payload: Vec<u8>,
    anti_matter: bool,
    ts: Timestamp,
}

/// In-memory write buffer of one index. Last write wins per composite key.
#[derive(Clone, Debug, Default)]
pub struct MemoryComponent {
    entries: BTreeMap<IndexKey, MemValue>,
    size_bytes: usize,
    ts_range: Option<(Timestamp, Timestamp)>,
    filter: RangeFilter,
}

impl MemoryComponent {
    pub fn new() -> Self {
        MemoryComponent::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Accumulated key + payload bytes of every write applied.
    pub fn size_bytes(&self) -> usize {
        self.size_bytes
    }

    pub fn filter(&self) -> RangeFilter {
        self.filter
    }

    pub fn widen_filter(&mut self, v: i64) {
        self.filter.widen(v);
    }

    /// Interval of the timestamps stored in this component, if any.
    pub fn observed_id(&self) -> Option<ComponentId> {
        self.ts_range.map(|(lo, hi)| ComponentId {
            min_ts: lo,
            max_ts: hi,
        })
    }

    pub fn max_ts(&self) -> Timestamp {
        self.ts_range.map(|r| r.1).unwrap_or(Timestamp::NONE)
    }

    pub fn insert(&mut self, e: IndexEntry) {
        self.size_bytes += e.accounted_size();
        if !e.ts.is_none() {
            self.ts_range = Some(match self.ts_range {
                None => (e.ts, e.ts),
                Some((lo, hi)) => (lo.min(e.ts), hi.max(e.ts)),
            });
        }
        self.entries.insert(
            e.key,
            MemValue {
                payload: e.payload,
                anti_matter: e.anti_matter,
                ts: e.ts,
            },
        );
    }

    pub fn get(&self, key: &IndexKey) -> Option<IndexEntry> {
        self.entries.get(key).map(|v| to_entry(key, v))
    }

    pub fn range<'a>(
        &'a self,
        lo: Option<&IndexKey>,
        hi: Option<&IndexKey>,
    ) -> impl Iterator<Item = IndexEntry> + 'a {
        let lo = lo.map_or(Bound::Unbounded, |k| Bound::Included(k.clone()));
        let hi = hi.map_or(Bound::Unbounded, |k| Bound::Included(k.clone()));
        let empty = matches!((&lo, &hi), (Bound::Included(a), Bound::Included(b)) if a > b);
        let iter = if empty {
            None
        } else {
            Some(self.entries.range((lo, hi)).map(|(k, v)| to_entry(k, v)))
        };
        iter.into_iter().flatten()
    }

    pub fn iter(&self) -> impl Iterator<Item = IndexEntry> + '_ {
        self.entries.iter().map(|(k, v)| to_entry(k, v))
    }
}

fn to_entry(k: &IndexKey, v: &MemValue) -> IndexEntry {
    IndexEntry {
        key: k.clone(),
        payload: v.payload.clone(),
        anti_matter: v.anti_matter,
        ts: v.ts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_write_wins_and_tracks_timestamps() {
        let mut m = MemoryComponent::new();
        m.insert(IndexEntry::matter(IndexKey::primary(1), b"a".to_vec(), Timestamp(16)));
        m.insert(IndexEntry::matter(IndexKey::primary(2), b"b".to_vec(), Timestamp(17)));
        m.insert(IndexEntry::anti_matter(IndexKey::primary(1), Timestamp(18)));
        assert_eq!(m.len(), 2);
        assert!(m.get(&IndexKey::primary(1)).unwrap().anti_matter);
        assert_eq!(m.observed_id(), Some(ComponentId::new(16, 18)));
        assert_eq!(m.size_bytes(), 9 + 9 + 8);
    }

    #[test]
    fn inverted_range_is_empty() {
        let mut m = MemoryComponent::new();
        m.insert(IndexEntry::matter(IndexKey::primary(1), vec![], Timestamp(1)));
        let lo = IndexKey::primary(5);
        let hi = IndexKey::primary(2);
        assert_eq!(m.range(Some(&lo), Some(&hi)).count(), 0);
        assert_eq!(m.range(None, Some(&lo)).count(), 1);
    }
}
