use super::*;
use crate::oracle::Oracle;
use crate::testutil::*;

#[test]
fn flush_stamps_every_tree_with_the_epoch_interval() {
    for st in all_strategies() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path(), st);
        cfg.auto_maintenance = false;
        let ds = Dataset::create(cfg).unwrap();
        ds.upsert(user(101, "CA", 2015)).unwrap();
        ds.upsert(user(102, "CA", 2016)).unwrap();
        ds.flush().unwrap();
        ds.upsert(user(103, "NY", 2017)).unwrap();
        ds.flush().unwrap();
        for t in ds.trees() {
            assert_eq!(
                t.component_ids(),
                vec![ComponentId::new(3, 3), ComponentId::new(1, 2)],
                "{} under {:?}",
                t.name(),
                st.kind
            );
        }
    }
}

#[test]
fn empty_flush_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path(), StrategyConfig::eager());
    ds.flush().unwrap();
    assert!(ds.component_counts().iter().all(|(_, n)| *n == 0));
}

#[test]
fn mutable_bitmap_flush_shares_one_bitmap() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path(), StrategyConfig::mutable_bitmap(CcMethod::Lock));
    ds.upsert(user(1, "CA", 1)).unwrap();
    ds.upsert(user(2, "CA", 2)).unwrap();
    ds.flush().unwrap();
    let p = ds.primary().disk_components()[0].bitmap().unwrap();
    let k = ds.pk_index().disk_components()[0].bitmap().unwrap();
    assert!(Arc::ptr_eq(&p, &k));
    ds.delete(1).unwrap();
    assert_eq!(k.count_invalid(), 1);
}

#[test]
fn manifest_lists_live_components() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path(), StrategyConfig::validation(RepairMode::None));
    ds.upsert(user(1, "CA", 1)).unwrap();
    ds.flush().unwrap();
    let text = fs::read_to_string(dir.path().join("MANIFEST")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().all(|l| l.ends_with(".run")), "{text}");
}

#[test]
fn rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), StrategyConfig::eager());
    cfg.memory_budget_bytes = 0;
    let err = Dataset::create(cfg).unwrap_err();
    assert!(err.to_string().contains("memory_budget_bytes"), "{err}");
}

#[test]
fn every_strategy_matches_the_oracle() {
    for st in all_strategies() {
        for seed in 0..3 {
            let dir = tempfile::tempdir().unwrap();
            let ds = dataset(dir.path(), st);
            let mut oracle = Oracle::new(DatasetSchema::user_location());
            random_history(&ds, &mut oracle, seed, 3000, 600, 0.5);
            let counts = ds.component_counts();
            assert!(counts[0].1 >= 1, "{counts:?}");
            assert_matches(&ds, &oracle, &plan(600, 3000));
            ds.settle().unwrap();
            assert_matches(&ds, &oracle, &plan(600, 3000));
        }
    }
}

#[test]
fn merges_keep_trees_aligned_where_required() {
    for st in [
        StrategyConfig::mutable_bitmap(CcMethod::Lock),
        StrategyConfig::validation(RepairMode::MergeBloomOpt),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset(dir.path(), st);
        let mut oracle = Oracle::new(DatasetSchema::user_location());
        random_history(&ds, &mut oracle, 5, 4000, 800, 0.3);
        ds.settle().unwrap();
        let pk = ds.pk_index().component_ids();
        if st.kind == StrategyKind::MutableBitmap {
            assert_eq!(ds.primary().component_ids(), pk);
        } else {
            assert_eq!(ds.secondaries()[0].component_ids(), pk);
        }
    }
}

#[test]
fn memory_budget_triggers_flush() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path(), StrategyConfig::eager());
    for k in 0..500 {
        ds.upsert(user(k, "CA", k as i64)).unwrap();
    }
    assert!(ds.memory_bytes() < ds.config().memory_budget_bytes);
    assert!(!ds.primary().disk_components().is_empty());
}

