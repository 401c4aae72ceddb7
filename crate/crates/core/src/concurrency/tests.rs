use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset::StrategyConfig;
use crate::oracle::Oracle;
use crate::record::DatasetSchema;
use crate::testutil::*;

fn manual(cc: CcMethod) -> (tempfile::TempDir, Dataset) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), StrategyConfig::mutable_bitmap(cc));
    cfg.auto_maintenance = false;
    let ds = Dataset::create(cfg).unwrap();
    (dir, ds)
}

/// Two flushed components holding keys `0..n`.
fn populate(ds: &Dataset, n: u64) {
    for k in 0..n {
        ds.upsert(user(k, "CA", k as i64)).unwrap();
        if k == n / 2 {
            ds.flush().unwrap();
        }
    }
    ds.flush().unwrap();
}

fn merge_all(ds: &Dataset) -> BuildReport {
    let pk = ds.pk_index().disk_components().to_vec();
    let primary = ds.primary().disk_components().to_vec();
    merge_mutable(ds, &pk, &primary).unwrap()
}

/// Runs `action` once, on a separate thread, when the build reaches `at`.
struct DeleteAt {
    at: PrimaryKey,
    fired: AtomicBool,
    tx: Mutex<mpsc::Sender<()>>,
    done: Mutex<mpsc::Receiver<()>>,
}

impl DeleteAt {
    fn hooks(at: u64) -> (Arc<Self>, mpsc::Receiver<()>, mpsc::Sender<()>) {
        let (tx, rx) = mpsc::channel();
        let (done_tx, done_rx) = mpsc::channel();
        let h = Arc::new(DeleteAt {
            at: PrimaryKey(at),
            fired: AtomicBool::new(false),
            tx: Mutex::new(tx),
            done: Mutex::new(done_rx),
        });
        (h, rx, done_tx)
    }

    fn fire(&self) {
        if !self.fired.swap(true, Ordering::SeqCst) {
            self.tx.lock().send(()).unwrap();
            self.done.lock().recv().unwrap();
        }
    }
}

impl BuildHooks for DeleteAt {
    fn before_copy(&self, key: PrimaryKey) {
        if key == self.at {
            self.fire();
        }
    }
}

/// Deletes `victims` while the build sits at key `at`.
fn delete_during_build(cc: CcMethod, at: u64, victims: &[u64]) -> (tempfile::TempDir, Dataset, BuildReport) {
    let (dir, ds) = manual(cc);
    populate(&ds, 40);
    let (hooks, go, done) = DeleteAt::hooks(at);
    ds.set_build_hooks(Some(hooks));
    let report = thread::scope(|s| {
        let ds = &ds;
        s.spawn(move || {
            go.recv().unwrap();
            for &v in victims {
                assert!(ds.delete(v).unwrap());
            }
            done.send(()).unwrap();
        });
        merge_all(ds)
    });
    ds.set_build_hooks(None);
    (dir, ds, report)
}

fn live_keys(ds: &Dataset) -> Vec<u64> {
    (0..40).filter(|&k| ds.get(k).unwrap().is_some()).collect()
}

#[test]
fn lock_method_marks_copies_of_scanned_keys() {
    let (_d, ds, report) = delete_during_build(CcMethod::Lock, 30, &[5, 35]);
    // 5 was copied already: its new copy is marked; 35 was skipped
    assert_eq!(report.primary.entry_count(), 39);
    assert_eq!(report.primary.bitmap().unwrap().count_invalid(), 1);
    assert!(Arc::ptr_eq(&report.primary.bitmap().unwrap(), &report.pk.bitmap().unwrap()));
    let want: Vec<u64> = (0..40).filter(|k| ![5, 35].contains(k)).collect();
    assert_eq!(live_keys(&ds), want);
    assert_eq!(report.side_file_keys, 0);
}

#[test]
fn side_file_replays_deletes_at_catch_up() {
    let (_d, ds, report) = delete_during_build(CcMethod::SideFile, 30, &[5, 35]);
    // the snapshot predates both deletes, so both versions were copied
    assert_eq!(report.primary.entry_count(), 40);
    assert_eq!(report.side_file_keys, 2);
    assert_eq!(report.primary.bitmap().unwrap().count_invalid(), 2);
    let want: Vec<u64> = (0..40).filter(|k| ![5, 35].contains(k)).collect();
    assert_eq!(live_keys(&ds), want);
}

#[test]
fn side_file_closes_after_catch_up() {
    let (_d, ds) = manual(CcMethod::SideFile);
    populate(&ds, 10);
    let link = BuildLink::new(CcMethod::SideFile, 10);
    assert!(link.try_append(PrimaryKey(1)));
    link.catch_up().unwrap();
    assert!(link.side_file_closed());
    assert!(!link.try_append(PrimaryKey(2)));
    assert!(link.side_file().is_empty());
}

#[test]
fn misaligned_inputs_rejected() {
    let (_d, ds) = manual(CcMethod::Lock);
    populate(&ds, 10);
    let pk = ds.pk_index().disk_components().to_vec();
    let primary = ds.primary().disk_components().to_vec();
    assert!(merge_mutable(&ds, &pk[..1], &primary).is_err());
}

#[test]
fn deletes_before_and_after_scan_position() {
    for cc in [CcMethod::Lock, CcMethod::SideFile] {
        for at in [0, 20, 39] {
            let (_d, ds, report) = delete_during_build(cc, at, &[0, 19, 20, 21, 39]);
            let want: Vec<u64> = (0..40).filter(|k| ![0, 19, 20, 21, 39].contains(k)).collect();
            assert_eq!(live_keys(&ds), want, "{cc:?} at {at}");
            let b = report.primary.bitmap().unwrap();
            assert_eq!(report.primary.entry_count() - b.count_invalid(), 35, "{cc:?} at {at}");
        }
    }
}

/// Randomly stalls the builder so writers overtake it at varying points.
struct Jitter {
    rng: Mutex<ChaCha8Rng>,
}

impl BuildHooks for Jitter {
    fn before_copy(&self, _key: PrimaryKey) {
        if self.rng.lock().random_bool(0.2) {
            thread::yield_now();
        }
    }

    fn before_catch_up(&self) {
        thread::yield_now();
    }
}

#[test]
fn concurrent_writers_match_oracle() {
    for seed in 0..8u64 {
        let mut finals = Vec::new();
        for cc in [CcMethod::Lock, CcMethod::SideFile] {
            let (_d, ds) = manual(cc);
            let mut oracle = Oracle::new(DatasetSchema::user_location());
            for k in 0..200 {
                let r = user(k, "CA", k as i64);
                ds.upsert(r.clone()).unwrap();
                oracle.upsert(r);
                if k % 50 == 49 {
                    ds.flush().unwrap();
                }
            }
            // each writer owns the keys congruent to its index
            let scripts: Vec<Vec<(u64, bool)>> = (0..4u64)
                .map(|w| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed * 10 + w);
                    (0..60).map(|_| (rng.random_range(0..50) * 4 + w, rng.random_bool(0.6))).collect()
                })
                .collect();
            for script in &scripts {
                for &(k, del) in script {
                    if del {
                        oracle.delete(PrimaryKey(k));
                    } else {
                        oracle.upsert(user(k, "NY", -(k as i64)));
                    }
                }
            }
            ds.set_build_hooks(Some(Arc::new(Jitter {
                rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            })));
            thread::scope(|s| {
                let ds = &ds;
                for script in &scripts {
                    s.spawn(move || {
                        for &(k, del) in script {
                            if del {
                                ds.delete(k).unwrap();
                            } else {
                                ds.upsert(user(k, "NY", -(k as i64))).unwrap();
                            }
                        }
                    });
                }
                merge_all(ds);
            });
            ds.set_build_hooks(None);
            assert_eq!(ds.primary().disk_components().len(), 1);
            assert_matches(&ds, &oracle, &plan(200, 200));
            ds.flush().unwrap();
            ds.merge().unwrap();
            assert_matches(&ds, &oracle, &plan(200, 200));
            finals.push(oracle.records().cloned().collect::<Vec<_>>());
        }
        assert_eq!(finals[0], finals[1]);
    }
}

