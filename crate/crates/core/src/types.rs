//! Keys, entries and component identifiers shared by every index.

use std::cmp::Ordering;
use std::fmt;

/// Primary key of a record: a 64-bit unsigned integer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrimaryKey(pub u64);

impl fmt::Display for PrimaryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for PrimaryKey {
    fn from(v: u64) -> Self {
        PrimaryKey(v)
    }
}

/// Logical write timestamp. `0` means "no timestamp".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const NONE: Timestamp = Timestamp(0);

    pub fn is_none(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ts{}", self.0)
    }
}

/// Composite index key.
///
/// Primary and primary-key indexes leave `secondary` empty, so ordering is by
/// primary key alone. Secondary indexes order by `(secondary, pk)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct IndexKey {
    pub secondary: Vec<u8>,
    pub pk: PrimaryKey,
}

impl IndexKey {
    pub fn primary(pk: impl Into<PrimaryKey>) -> Self {
        IndexKey {
            secondary: Vec::new(),
            pk: pk.into(),
        }
    }

    pub fn secondary(secondary: impl Into<Vec<u8>>, pk: impl Into<PrimaryKey>) -> Self {
        IndexKey {
            secondary: secondary.into(),
            pk: pk.into(),
        }
    }

    /// Encoded length on disk: secondary bytes followed by the big-endian pk.
    pub fn encoded_len(&self) -> usize {
        self.secondary.len() + 8
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.secondary);
        out.extend_from_slice(&self.pk.0.to_be_bytes());
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < 8 {
            return None;
        }
        let (sec, pk) = bytes.split_at(bytes.len() - 8);
        Some(IndexKey {
            secondary: sec.to_vec(),
            pk: PrimaryKey(u64::from_be_bytes(pk.try_into().ok()?)),
        })
    }
}

impl Ord for IndexKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.secondary
            .cmp(&other.secondary)
            .then(self.pk.cmp(&other.pk))
    }
}

impl PartialOrd for IndexKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One entry of an index: a record (primary index), a bare key (primary key
/// index) or a `(secondary, pk)` pair (secondary index).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub key: IndexKey,
    pub payload: Vec<u8>,
    pub anti_matter: bool,
    pub ts: Timestamp,
}

impl IndexEntry {
    pub fn matter(key: IndexKey, payload: Vec<u8>, ts: Timestamp) -> Self {
        IndexEntry {
            key,
            payload,
            anti_matter: false,
            ts,
        }
    }

    pub fn anti_matter(key: IndexKey, ts: Timestamp) -> Self {
        IndexEntry {
            key,
            payload: Vec::new(),
            anti_matter: true,
            ts,
        }
    }

    pub fn pk(&self) -> PrimaryKey {
        self.key.pk
    }

    /// Bytes charged against the memory budget.
    pub fn accounted_size(&self) -> usize {
        self.key.encoded_len() + self.payload.len()
    }
}

/// `(minTS, maxTS)` interval of the writes stored in a component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ComponentId {
    pub min_ts: Timestamp,
    pub max_ts: Timestamp,
}

impl ComponentId {
    pub fn new(min: u64, max: u64) -> Self {
        debug_assert!(min <= max);
        ComponentId {
            min_ts: Timestamp(min),
            max_ts: Timestamp(max),
        }
    }

    pub fn span(parts: impl IntoIterator<Item = ComponentId>) -> Option<ComponentId> {
        parts.into_iter().reduce(|a, b| ComponentId {
            min_ts: a.min_ts.min(b.min_ts),
            max_ts: a.max_ts.max(b.max_ts),
        })
    }

    pub fn overlaps(&self, other: &ComponentId) -> bool {
        self.min_ts <= other.max_ts && other.min_ts <= self.max_ts
    }

    pub fn contains(&self, other: &ComponentId) -> bool {
        self.min_ts <= other.min_ts && other.max_ts <= self.max_ts
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.min_ts.0, self.max_ts.0)
    }
}

/// Min/max of a component's filter key. An empty filter prunes everything.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct RangeFilter {
    bounds: Option<(i64, i64)>,
}

impl RangeFilter {
    pub fn empty() -> Self {
        RangeFilter { bounds: None }
    }

    pub fn new(min: i64, max: i64) -> Self {
        assert!(min <= max, "range filter min {min} > max {max}");
        RangeFilter {
            bounds: Some((min, max)),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_none()
    }

    pub fn bounds(&self) -> Option<(i64, i64)> {
        self.bounds
    }

    pub fn widen(&mut self, v: i64) {
        self.bounds = Some(match self.bounds {
            None => (v, v),
            Some((lo, hi)) => (lo.min(v), hi.max(v)),
        });
    }

    pub fn union(&mut self, other: &RangeFilter) {
        if let Some((lo, hi)) = other.bounds {
            self.widen(lo);
            self.widen(hi);
        }
    }

    pub fn intersects(&self, range: &FilterRange) -> bool {
        match self.bounds {
            None => false,
            Some((lo, hi)) => lo <= range.hi && range.lo <= hi,
        }
    }
}

/// Inclusive predicate on the filter key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterRange {
    pub lo: i64,
    pub hi: i64,
}

impl FilterRange {
    pub fn new(lo: i64, hi: i64) -> Self {
        FilterRange { lo, hi }
    }

    pub fn below(hi_exclusive: i64) -> Self {
        FilterRange {
            lo: i64::MIN,
            hi: hi_exclusive - 1,
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }
}
