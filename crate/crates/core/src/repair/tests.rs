use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset::{RepairMode, StrategyConfig};
use crate::testutil::*;

fn manual(st: StrategyConfig) -> (tempfile::TempDir, Dataset) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), st);
    cfg.auto_maintenance = false;
    let ds = Dataset::create(cfg).unwrap();
    (dir, ds)
}

/// Random writes with independent bookkeeping of each key's last write
/// timestamp, read off the dataset clock.
fn history(ds: &Dataset, last: &mut HashMap<u64, u64>, rng: &mut ChaCha8Rng, n: usize, keys: u64) {
    for t in 0..n {
        let k = rng.random_range(0..keys);
        let before = ds.clock();
        if rng.random_bool(0.15) {
            ds.delete(k).unwrap();
        } else {
            ds.upsert(user(k, LOCATIONS[rng.random_range(0..LOCATIONS.len())], t as i64)).unwrap();
        }
        let after = ds.clock();
        assert_eq!(after.0, before.0 + 1);
        last.insert(k, after.0);
    }
}

/// Positions of the merged stream whose key was written again later.
fn stale_positions(ds: &Dataset, parts: &[Arc<DiskComponent>], last: &HashMap<u64, u64>) -> Vec<u64> {
    let plan = ds.secondaries()[0].plan_merge(parts).unwrap();
    let bitmaps = parts.iter().map(|p| p.bitmap()).collect();
    merged_entries(&plan, bitmaps)
        .map(|r| r.unwrap().entry)
        .enumerate()
        .filter(|(_, e)| !e.anti_matter && last[&e.pk().0] > e.ts.0)
        .map(|(i, _)| i as u64)
        .collect()
}

#[test]
fn merge_repair_marks_the_overwritten_entry() {
    let (_d, ds) = manual(StrategyConfig::validation(RepairMode::Merge));
    ds.upsert(user(101, "CA", 2015)).unwrap();
    ds.upsert(user(102, "CA", 2016)).unwrap();
    ds.flush().unwrap();
    ds.upsert(user(103, "WA", 2017)).unwrap();
    ds.flush().unwrap();
    ds.upsert(user(101, "NY", 2018)).unwrap();
    ds.flush().unwrap();
    let parts = ds.secondaries()[0].disk_components().to_vec();
    let report = merge_repair(&ds, 0, &parts, false).unwrap();
    let bm = report.component.bitmap().unwrap();
    // merged order: (CA,101) (CA,102) (NY,101) (WA,103)
    assert_eq!(bm.invalid_ordinals(), vec![0]);
    assert_eq!(report.component.repaired_ts(), Timestamp(4));
    assert_eq!(report.stats.invalid, 1);
    assert_eq!(ds.repair_history().len(), 1);
}

#[test]
fn pruning_skips_components_at_or_below_repaired_ts() {
    let (_d, ds) = manual(StrategyConfig::validation(RepairMode::Merge));
    let mut k = 0;
    for upto in [10u64, 18, 19] {
        while ds.clock().0 < upto {
            ds.upsert(user(k, "CA", 0)).unwrap();
            k += 1;
        }
        ds.flush().unwrap();
    }
    let ids: Vec<String> = ds.pk_index().component_ids().iter().map(|i| i.to_string()).collect();
    assert_eq!(ids, vec!["19-19", "11-18", "1-10"]);
    let view = prune_pk_components(&ds, Timestamp(15));
    assert_eq!(view.pruned, 1);
    assert_eq!(view.disk.len(), 2);
    assert_eq!(view.max_ts, Timestamp(19));
}

#[test]
fn flushed_secondary_starts_repaired_to_its_max_ts() {
    let (_d, ds) = manual(StrategyConfig::validation(RepairMode::Merge));
    ds.upsert(user(1, "CA", 0)).unwrap();
    ds.upsert(user(1, "NY", 0)).unwrap();
    ds.upsert(user(2, "NY", 0)).unwrap();
    ds.flush().unwrap();
    let c = &ds.secondaries()[0].disk_components()[0];
    assert_eq!(c.repaired_ts(), Timestamp(3));
}

#[test]
fn repair_matches_brute_force_and_variants_agree() {
    for seed in 0..40u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = if seed % 2 == 0 {
            StrategyConfig::validation(RepairMode::Merge)
        } else {
            StrategyConfig::validation(RepairMode::MergeBloomOpt)
        };
        let (_d, ds) = manual(st);
        let mut last = HashMap::new();
        let keys = rng.random_range(20..400);
        for _ in 0..rng.random_range(2..7) {
            let n = rng.random_range(1..300);
            history(&ds, &mut last, &mut rng, n, keys);
            ds.flush().unwrap();
            if rng.random_bool(0.4) {
                ds.merge().unwrap();
            }
        }
        let n = rng.random_range(0..100);
        history(&ds, &mut last, &mut rng, n, keys);
        let parts = ds.secondaries()[0].disk_components().to_vec();
        let want = stale_positions(&ds, &parts, &last);
        let run = |prune, bloom_opt| {
            compute_merge_repair(&ds, 0, &parts, RepairOptions { prune, bloom_opt }).unwrap()
        };
        let pruned = run(true, false);
        assert_eq!(pruned.bitmap.invalid_ordinals(), want, "seed {seed}");
        assert_eq!(run(false, false).bitmap.invalid_ordinals(), want, "seed {seed}");
        let bloom = run(true, true);
        if st.repair == RepairMode::MergeBloomOpt {
            assert!(bloom.stats.bloom_opt_used, "seed {seed}");
        }
        assert_eq!(bloom.bitmap.invalid_ordinals(), want, "seed {seed}");
        assert!(bloom.stats.keys_sorted <= pruned.stats.keys_sorted);
    }
}

#[test]
fn standalone_repair_agrees_with_merge_repair() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (_d, ds) = manual(StrategyConfig::validation(RepairMode::None));
    let mut last = HashMap::new();
    history(&ds, &mut last, &mut rng, 400, 150);
    ds.flush().unwrap();
    history(&ds, &mut last, &mut rng, 200, 150);
    ds.flush().unwrap();
    let c = ds.secondaries()[0].disk_components()[1].clone();
    let merge = compute_merge_repair(&ds, 0, std::slice::from_ref(&c), RepairOptions::default()).unwrap();
    let stats = standalone_repair(&ds, 0, &c).unwrap();
    // merge positions skip anti-matter dropped from the oldest component
    let plan = ds.secondaries()[0].plan_merge(std::slice::from_ref(&c)).unwrap();
    let merged: Vec<IndexEntry> = merged_entries(&plan, vec![None]).map(|r| r.unwrap().entry).collect();
    let from_merge: Vec<IndexKey> = merge
        .bitmap
        .invalid_ordinals()
        .into_iter()
        .map(|p| merged[p as usize].key.clone())
        .collect();
    let entries: Vec<IndexEntry> = c.scan_all(false).map(|r| r.unwrap().entry).collect();
    let from_standalone: Vec<IndexKey> = c
        .bitmap()
        .unwrap()
        .invalid_ordinals()
        .into_iter()
        .map(|p| entries[p as usize].key.clone())
        .collect();
    assert_eq!(from_standalone, from_merge);
    assert_eq!(stats.invalid, merge.stats.invalid);
    assert!(stats.invalid > 0);
    assert_eq!(c.repaired_ts(), ds.clock());
    // a second run finds nothing new and prunes everything on disk
    let again = standalone_repair(&ds, 0, &c).unwrap();
    assert_eq!(again.pk_components_searched, 0);
    assert_eq!(c.bitmap().unwrap().count_invalid(), stats.invalid);
}

#[test]
fn full_repair_zeroes_direct_validation_waste() {
    let (_d, ds) = manual(StrategyConfig::validation(RepairMode::None));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut last = HashMap::new();
    for _ in 0..4 {
        history(&ds, &mut last, &mut rng, 300, 200);
        ds.flush().unwrap();
    }
    let all = crate::query::KeyRange::new(vec![0u8], vec![0xff]);
    let opts = crate::query::LookupOptions::default();
    let before = ds.query_direct_validation(0, &all, &opts).unwrap();
    assert!(before.metrics.wasted_fetches > 0);
    let runs = repair_all(&ds).unwrap();
    assert_eq!(runs.len(), ds.secondaries()[0].disk_components().len());
    let after = ds.query_direct_validation(0, &all, &opts).unwrap();
    assert_eq!(after.metrics.wasted_fetches, 0);
    assert_eq!(after.items, before.items);
}

#[test]
fn bloom_opt_falls_back_without_precondition() {
    let (_d, ds) = manual(StrategyConfig::validation(RepairMode::Merge));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut last = HashMap::new();
    for _ in 0..3 {
        history(&ds, &mut last, &mut rng, 100, 50);
        ds.flush().unwrap();
    }
    // one fully merged primary key component spanning every secondary part
    let pk_parts = ds.pk_index().disk_components().to_vec();
    ds.pk_index().merge(&pk_parts, None).unwrap();
    let parts = ds.secondaries()[0].disk_components()[..2].to_vec();
    assert!(!bloom_opt_applicable(&ds, &parts));
    let r = compute_merge_repair(&ds, 0, &parts, RepairOptions { prune: true, bloom_opt: true }).unwrap();
    assert!(!r.stats.bloom_opt_used);
}

#[test]
fn bloom_opt_needs_internally_repaired_parts() {
    let (_d, ds) = manual(StrategyConfig::validation(RepairMode::None));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut last = HashMap::new();
    for _ in 0..3 {
        history(&ds, &mut last, &mut rng, 100, 50);
        ds.flush().unwrap();
    }
    // a plain merge of two flushes holds entries made stale by its newer half
    let sec = ds.secondary(0).unwrap();
    let two = sec.disk_components()[..2].to_vec();
    let merged = sec.merge(&two, None).unwrap();
    assert!(merged.repaired_ts() < merged.id().max_ts);
    let parts = sec.disk_components().to_vec();
    assert!(!bloom_opt_applicable(&ds, &parts));
    let r = compute_merge_repair(&ds, 0, &parts, RepairOptions { prune: true, bloom_opt: true }).unwrap();
    assert!(!r.stats.bloom_opt_used);
    assert_eq!(r.bitmap.invalid_ordinals(), stale_positions(&ds, &parts, &last));
}

#[test]
fn zero_updates_sort_almost_nothing_with_bloom_opt() {
    let (_d, ds) = manual(StrategyConfig::validation(RepairMode::MergeBloomOpt));
    let mut k = 0;
    for _ in 0..4 {
        for _ in 0..300 {
            ds.upsert(user(k, "CA", 0)).unwrap();
            k += 1;
        }
        ds.flush().unwrap();
    }
    let parts = ds.secondaries()[0].disk_components()[2..].to_vec();
    let r = compute_merge_repair(&ds, 0, &parts, RepairOptions { prune: false, bloom_opt: true }).unwrap();
    assert!(r.stats.bloom_opt_used);
    assert_eq!(r.stats.invalid, 0);
    // bounded by the false positive rate of two filters
    assert!(r.stats.keys_sorted <= 30, "{:?}", r.stats);
}

#[test]
fn co_sequential_switch_when_keys_outnumber_the_index() {
    let (_d, ds) = manual(StrategyConfig::validation(RepairMode::Merge));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut last = HashMap::new();
    history(&ds, &mut last, &mut rng, 600, 300);
    ds.flush().unwrap();
    history(&ds, &mut last, &mut rng, 20, 300);
    ds.flush().unwrap();
    let parts = ds.secondaries()[0].disk_components()[1..].to_vec();
    let r = compute_merge_repair(&ds, 0, &parts, RepairOptions::default()).unwrap();
    assert!(r.stats.co_sequential);
    assert_eq!(r.bitmap.invalid_ordinals(), stale_positions(&ds, &parts, &last));
}

#[test]
fn sorter_spills_under_small_budget() {
    let (_d, ds) = manual(StrategyConfig::validation(RepairMode::Merge));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut last = HashMap::new();
    history(&ds, &mut last, &mut rng, 2000, 1500);
    ds.flush().unwrap();
    let parts = ds.secondaries()[0].disk_components().to_vec();
    let r = compute_merge_repair(&ds, 0, &parts, RepairOptions { prune: false, bloom_opt: false }).unwrap();
    assert!(r.stats.spilled_runs > 0);
    assert_eq!(r.bitmap.invalid_ordinals(), stale_positions(&ds, &parts, &last));
    assert!(!crate::repair::sorter::scratch_dir(ds.root()).exists()
        || std::fs::read_dir(crate::repair::sorter::scratch_dir(ds.root())).unwrap().count() == 0);
}
