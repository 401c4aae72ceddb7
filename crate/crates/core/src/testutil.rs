//! Shared fixtures for unit tests.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{CcMethod, Dataset, DatasetConfig, RepairMode, StrategyConfig};
use crate::oracle::{Oracle, VerifyPlan};
use crate::query::{KeyRange, LookupOptions};
use crate::record::{DatasetSchema, Record, Value};
use crate::types::{FilterRange, PrimaryKey};

pub const LOCATIONS: [&str; 8] = ["AZ", "CA", "FL", "IL", "NY", "OR", "TX", "WA"];

/// Small pages and budget so short histories produce many components.
pub fn config(dir: &Path, strategy: StrategyConfig) -> DatasetConfig {
    let mut c = DatasetConfig::new(dir, DatasetSchema::user_location(), strategy);
    c.page_size = 512;
    c.memory_budget_bytes = 8 << 10;
    c.cache_bytes = 64 << 10;
    c.max_mergeable_bytes = 1 << 20;
    c.sort_memory_bytes = 4 << 10;
    c
}

pub fn dataset(dir: &Path, strategy: StrategyConfig) -> Dataset {
    Dataset::create(config(dir, strategy)).unwrap()
}

pub fn user(key: u64, loc: &str, time: i64) -> Record {
    Record::new(key, vec![Value::Str(loc.to_string()), Value::Int(time)])
}

pub fn all_strategies() -> Vec<StrategyConfig> {
    let mut eager_secondaries = StrategyConfig::mutable_bitmap(CcMethod::Lock);
    eager_secondaries.mb_secondary = crate::dataset::SecondaryMaintenance::Eager;
    vec![
        StrategyConfig::eager(),
        StrategyConfig::validation(RepairMode::None),
        StrategyConfig::validation(RepairMode::Merge),
        StrategyConfig::validation(RepairMode::MergeBloomOpt),
        StrategyConfig::mutable_bitmap(CcMethod::Lock),
        StrategyConfig::mutable_bitmap(CcMethod::SideFile),
        eager_secondaries,
    ]
}

/// Applies `n` random inserts, deletes and upserts to both sides. Time
/// values follow the operation count so filters stay meaningful.
pub fn random_history(ds: &Dataset, oracle: &mut Oracle, seed: u64, n: usize, keys: u64, update: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_fresh = 0u64;
    for t in 0..n {
        let reuse = next_fresh > 0 && rng.random_bool(update);
        let key = if reuse {
            rng.random_range(0..next_fresh)
        } else {
            next_fresh = (next_fresh + 1).min(keys);
            next_fresh - 1
        };
        let rec = user(key, LOCATIONS[rng.random_range(0..LOCATIONS.len())], t as i64);
        match rng.random_range(0..10) {
            0..=1 if reuse => {
                ds.delete(key).unwrap();
                oracle.delete(PrimaryKey(key));
            }
            2..=3 => {
                let a = ds.insert(rec.clone()).unwrap();
                let b = oracle.insert(rec);
                assert_eq!(a, b, "insert of {key} at op {t}");
            }
            _ => {
                ds.upsert(rec.clone()).unwrap();
                oracle.upsert(rec);
            }
        }
    }
}

pub fn plan(keys: u64, horizon: i64) -> VerifyPlan {
    let loc = |s: &str| Value::Str(s.to_string()).key_bytes();
    VerifyPlan {
        keys: (0..keys + 3).map(PrimaryKey).collect(),
        ranges: vec![
            (0, KeyRange::new(loc("CA"), loc("CA"))),
            (0, KeyRange::new(loc("FL"), loc("OR"))),
            (0, KeyRange::new(loc("A"), loc("Z"))),
            (0, KeyRange::new(loc("ZZ"), loc("ZZ"))),
        ],
        filters: vec![
            FilterRange::new(0, horizon / 10),
            FilterRange::new(horizon / 3, horizon / 2),
            FilterRange::new(horizon - horizon / 10, horizon),
            FilterRange::new(i64::MIN, i64::MAX),
        ],
        lookup: vec![
            LookupOptions::default(),
            LookupOptions::naive(),
            LookupOptions {
                batch_bytes: 64,
                ..LookupOptions::default()
            },
        ],
    }
}

pub fn assert_matches(ds: &Dataset, oracle: &Oracle, plan: &VerifyPlan) {
    let diffs = crate::oracle::verify(ds, oracle, plan).unwrap();
    assert!(diffs.is_empty(), "{:?}: {:#?}", ds.strategy(), &diffs[..diffs.len().min(5)]);
}
