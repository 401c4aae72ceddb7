use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use super::*;
use crate::bitmap::{Mutability, ValidityBitmap};
use crate::bloom::BloomConfig;
use crate::record::{DatasetSchema, Record};

fn cache() -> Arc<PageCache> {
    Arc::new(PageCache::new(1 << 20, 512))
}

fn small_config() -> ComponentConfig {
    ComponentConfig {
        page_size: 512,
        bloom: Some(BloomConfig::standard()),
    }
}

fn running_example(dir: &TempDir, cache: &Arc<PageCache>) -> Arc<DiskComponent> {
    let schema = DatasetSchema::user_location();
    let recs = [
        Record::new(101, vec!["CA".into(), 2015.into()]),
        Record::new(102, vec!["CA".into(), 2016.into()]),
    ];
    let entries: Vec<_> = recs
        .iter()
        .map(|r| IndexEntry::matter(IndexKey::primary(r.key), r.encode(), Timestamp::NONE))
        .collect();
    let c = build_component(
        dir.path().join("1-10.run"),
        &entries,
        small_config(),
        ComponentId::new(1, 10),
        cache,
        |e| {
            let r = Record::decode(e.key.pk, &e.payload).unwrap();
            schema.extract_filter_key(&r).unwrap()
        },
    )
    .unwrap();
    Arc::new(c)
}

fn random_entries(n: usize, seed: u64) -> BTreeMap<IndexKey, IndexEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = BTreeMap::new();
    while map.len() < n {
        let k = IndexKey::primary(rng.random::<u64>());
        let len = rng.random_range(0..40);
        let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let anti = rng.random_bool(0.1);
        let e = if anti {
            IndexEntry::anti_matter(k.clone(), Timestamp(rng.random_range(1..1000)))
        } else {
            IndexEntry::matter(k.clone(), payload, Timestamp(rng.random_range(0..1000)))
        };
        map.insert(k, e);
    }
    map
}

#[test]
fn empty_stream_builds_empty_component() {
    let dir = TempDir::new().unwrap();
    let cache = cache();
    let c = build_component(
        dir.path().join("e.run"),
        &[],
        small_config(),
        ComponentId::new(1, 1),
        &cache,
        |_| None,
    )
    .unwrap();
    assert_eq!(c.entry_count(), 0);
    assert!(c.range_filter().is_empty());
    let c = Arc::new(c);
    assert_eq!(c.scan_all(false).count(), 0);
    let mut s = IoStats::default();
    assert!(c.point_lookup(&IndexKey::primary(1), None, &mut s).unwrap().is_none());
}

#[test]
fn running_example_filter_and_lookup() {
    let dir = TempDir::new().unwrap();
    let cache = cache();
    let c = running_example(&dir, &cache);
    assert_eq!(c.range_filter().bounds(), Some((2015, 2016)));
    let mut s = IoStats::default();
    let (ord, e) = c.point_lookup(&IndexKey::primary(101), None, &mut s).unwrap().unwrap();
    assert_eq!(ord, 0);
    let r = Record::decode(e.key.pk, &e.payload).unwrap();
    assert_eq!(r, Record::new(101, vec!["CA".into(), 2015.into()]));

    let all: Vec<_> = c.scan_all(false).map(|r| r.unwrap().entry.key.pk.0).collect();
    assert_eq!(all, vec![101, 102]);
}

#[test]
fn reopen_preserves_metadata() {
    let dir = TempDir::new().unwrap();
    let cache = cache();
    let c = running_example(&dir, &cache);
    let again = DiskComponent::open(c.path(), cache.clone()).unwrap();
    assert_eq!(again.id(), ComponentId::new(1, 10));
    assert_eq!(again.entry_count(), 2);
    assert_eq!(again.range_filter(), c.range_filter());
    assert_eq!(again.repaired_ts(), Timestamp(10));
    c.set_repaired_ts(Timestamp(19)).unwrap();
    let again = DiskComponent::open(c.path(), cache).unwrap();
    assert_eq!(again.repaired_ts(), Timestamp(19));
}

#[test]
fn unsorted_or_duplicate_input_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cache = cache();
    let a = IndexEntry::matter(IndexKey::primary(2), vec![], Timestamp::NONE);
    let b = IndexEntry::matter(IndexKey::primary(1), vec![], Timestamp::NONE);
    let r = build_component(
        dir.path().join("x.run"),
        &[a.clone(), b],
        small_config(),
        ComponentId::new(1, 1),
        &cache,
        |_| None,
    );
    assert!(matches!(r, Err(Error::Build(_))));
    let r = build_component(
        dir.path().join("y.run"),
        &[a.clone(), a],
        small_config(),
        ComponentId::new(1, 1),
        &cache,
        |_| None,
    );
    assert!(matches!(r, Err(Error::Build(_))));
    assert!(!dir.path().join("x.run").exists());
}

#[test]
fn oversized_entry_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cache = cache();
    let e = IndexEntry::matter(IndexKey::primary(1), vec![0; 600], Timestamp::NONE);
    let r = build_component(
        dir.path().join("x.run"),
        &[e],
        small_config(),
        ComponentId::new(1, 1),
        &cache,
        |_| None,
    );
    assert!(matches!(r, Err(Error::Build(_))));
}

#[test]
fn lookups_match_ordered_map_oracle() {
    let dir = TempDir::new().unwrap();
    let cache = cache();
    let oracle = random_entries(10_000, 7);
    let c = build_component(
        dir.path().join("r.run"),
        oracle.values(),
        small_config(),
        ComponentId::new(1, 1000),
        &cache,
        |_| None,
    )
    .unwrap();
    assert!(c.page_count() > 100);
    let mut s = IoStats::default();
    for (i, (k, e)) in oracle.iter().enumerate() {
        let (ord, got) = c.point_lookup(k, None, &mut s).unwrap().unwrap();
        assert_eq!(ord, i as u64);
        assert_eq!(&got, e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..2000 {
        let k = IndexKey::primary(rng.random::<u64>());
        let got = c.point_lookup(&k, None, &mut s).unwrap().map(|x| x.1);
        assert_eq!(got.as_ref(), oracle.get(&k));
    }
    // lookup/scan agreement
    let c = Arc::new(c);
    let scanned: Vec<_> = c.scan_all(false).map(|r| r.unwrap().entry).collect();
    assert_eq!(scanned, oracle.values().cloned().collect::<Vec<_>>());
}

#[test]
fn bloom_negative_reads_no_pages() {
    let dir = TempDir::new().unwrap();
    let cache = cache();
    let c = running_example(&dir, &cache);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // find a key the filter rejects
    let absent = loop {
        let k = IndexKey::primary(rng.random::<u64>());
        if !c.bloom().unwrap().may_contain(k.pk) {
            break k;
        }
    };
    let mut s = IoStats::default();
    assert!(c.point_lookup(&absent, None, &mut s).unwrap().is_none());
    assert_eq!(s.pages_read, 0);
    assert_eq!(s.bloom_tests, 1);
}

#[test]
fn stateful_cursor_matches_stateless_with_fewer_reads() {
    let dir = TempDir::new().unwrap();
    let oracle = random_entries(10_000, 11);
    let build_cache = cache();
    let c = build_component(
        dir.path().join("r.run"),
        oracle.values(),
        small_config(),
        ComponentId::new(1, 1000),
        &build_cache,
        |_| None,
    )
    .unwrap();
    // a cache too small to help, so the difference comes from the cursor
    let tiny = Arc::new(PageCache::new(0, 512));
    let c = DiskComponent::open(c.path(), tiny).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut probes: Vec<IndexKey> = oracle.keys().cloned().collect();
    probes.extend((0..3000).map(|_| IndexKey::primary(rng.random::<u64>())));
    probes.sort();

    let mut stateless = IoStats::default();
    let mut stateful = IoStats::default();
    let mut cur = LookupCursor::new();
    for k in &probes {
        let a = c.point_lookup(k, None, &mut stateless).unwrap();
        let b = c.point_lookup(k, Some(&mut cur), &mut stateful).unwrap();
        assert_eq!(a, b);
    }
    assert!(stateful.pages_read <= stateless.pages_read);
    assert_eq!(stateful.pages_read as usize, c.page_count());
}

#[test]
fn stateful_cursor_handles_descending_probe() {
    let dir = TempDir::new().unwrap();
    let cache = cache();
    let oracle = random_entries(2000, 3);
    let c = build_component(
        dir.path().join("r.run"),
        oracle.values(),
        small_config(),
        ComponentId::new(1, 1000),
        &cache,
        |_| None,
    )
    .unwrap();
    let keys: Vec<_> = oracle.keys().cloned().collect();
    let mut cur = LookupCursor::new();
    let mut s = IoStats::default();
    for k in keys.iter().rev().step_by(7) {
        let got = c.point_lookup(k, Some(&mut cur), &mut s).unwrap().unwrap().1;
        assert_eq!(&got, &oracle[k]);
    }
}

#[test]
fn scan_ranges_and_bitmaps() {
    let dir = TempDir::new().unwrap();
    let cache = cache();
    let oracle = random_entries(3000, 5);
    let c = Arc::new(
        build_component(
            dir.path().join("r.run"),
            oracle.values(),
            small_config(),
            ComponentId::new(1, 1000),
            &cache,
            |_| None,
        )
        .unwrap(),
    );
    let keys: Vec<_> = oracle.keys().cloned().collect();
    let (lo, hi) = (keys[500].clone(), keys[1499].clone());
    let got: Vec<_> = c
        .scan(Some(lo), Some(hi), None)
        .map(|r| r.unwrap().ordinal)
        .collect();
    assert_eq!(got, (500..1500).collect::<Vec<u64>>());

    // empty range
    let (lo, hi) = (keys[10].clone(), keys[9].clone());
    assert_eq!(c.scan(Some(lo), Some(hi), None).count(), 0);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let bm = Arc::new(ValidityBitmap::new(c.entry_count(), Mutability::Mutable));
        let k = rng.random_range(0..c.entry_count());
        for _ in 0..k {
            bm.set_invalid(rng.random_range(0..c.entry_count())).unwrap();
        }
        let set = bm.count_invalid();
        c.attach_bitmap(bm.clone()).unwrap();
        let n = c.scan_all(true).count() as u64;
        assert_eq!(n, c.entry_count() - set);
        for ord in bm.invalid_ordinals() {
            assert!(!c.bitmap_is_valid(ord).unwrap());
        }
    }
}

#[test]
fn bitmap_set_on_component() {
    let dir = TempDir::new().unwrap();
    let cache = cache();
    let c = running_example(&dir, &cache);
    assert!(c.bitmap_set_invalid(1).is_err());
    c.attach_bitmap(Arc::new(ValidityBitmap::new(2, Mutability::Mutable)))
        .unwrap();
    assert!(c.bitmap_is_valid(1).unwrap());
    c.bitmap_set_invalid(1).unwrap();
    assert!(!c.bitmap_is_valid(1).unwrap());
    assert!(c.bitmap_set_invalid(2).is_err());
    c.persist_bitmap().unwrap();
    let again = DiskComponent::open(c.path(), cache).unwrap();
    assert!(again.load_bitmap_sidecar(Mutability::Mutable).unwrap());
    assert!(!again.bitmap_is_valid(1).unwrap());
    assert_eq!(std::fs::read(c.bitmap_path()).unwrap(), vec![0b10]);
}

#[test]
fn obsolete_component_removes_files_on_drop() {
    let dir = TempDir::new().unwrap();
    let cache = cache();
    let c = running_example(&dir, &cache);
    c.attach_bitmap(Arc::new(ValidityBitmap::new(2, Mutability::Mutable)))
        .unwrap();
    c.persist_bitmap().unwrap();
    let path = c.path().to_path_buf();
    let pinned = c.clone();
    c.mark_obsolete();
    drop(c);
    assert!(path.exists(), "still pinned by a reader");
    drop(pinned);
    assert!(!path.exists());
    assert!(!path.with_extension("bm").exists());
}
