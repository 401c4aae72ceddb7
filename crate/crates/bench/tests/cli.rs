use std::process::Command;

use auxlsm::StrategyKind;
use auxlsm_bench::{cmd_ingest, cmd_query, cmd_repair, cmd_verify, BenchConfig, BenchError};

fn small(strategy: &str) -> BenchConfig {
    let mut cfg = BenchConfig::default();
    cfg.apply_str(&format!(
        "strategy={strategy}\nrecords=10000\npage_size=4096\nmemory_budget_bytes=262144\nmessage_min=20\nmessage_max=60\n"
    ))
    .unwrap();
    cfg
}

#[test]
fn verify_passes_for_each_strategy() {
    for strategy in ["eager", "validation", "mutable-bitmap"] {
        let mut cfg = small(strategy);
        cfg.update_ratio = 0.3;
        let out = cmd_verify(&cfg).unwrap();
        assert!(out.passed(), "{strategy}: {:?}", &out.mismatches[..out.mismatches.len().min(3)]);
    }
}

#[test]
fn verify_passes_with_repair_and_side_file() {
    let mut cfg = small("validation");
    cfg.apply_str("repair=merge-bloom\nupdate_ratio=0.5\ndist=zipf").unwrap();
    assert!(cmd_verify(&cfg).unwrap().passed());
    let mut cfg = small("mutable-bitmap");
    cfg.apply_str("cc=sidefile\nupdate_ratio=0.5\ndelete_ratio=0.1\nopt=none").unwrap();
    assert!(cmd_verify(&cfg).unwrap().passed());
}

#[test]
fn zero_record_ingest_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("validation");
    cfg.records = 0;
    cfg.dir = Some(dir.path().to_path_buf());
    let report = cmd_ingest(&cfg).unwrap();
    assert!(report.is_empty());
    let files: Vec<_> = walk(dir.path()).into_iter().filter(|p| p.extension().is_some_and(|e| e == "run")).collect();
    assert!(files.is_empty(), "{files:?}");
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn ingest_reports_every_tenth() {
    let report = cmd_ingest(&small("eager")).unwrap();
    assert_eq!(report.rows.len(), 10);
    assert_eq!(report.rows.last().unwrap().records, 10_000);
    assert!(report.rows.iter().all(|r| r.phase == "ingest" && r.ops == 1000));
}

#[test]
fn selectivity_sweep_emits_one_row_each() {
    let mut cfg = small("validation");
    cfg.apply_str("selectivities=0.00001,0.0001,0.001,0.01,0.1,0.2\nqueries_per_selectivity=3").unwrap();
    let report = cmd_query(&cfg).unwrap();
    let sels: Vec<f64> = report.rows.iter().map(|r| r.selectivity.unwrap()).collect();
    assert_eq!(sels, cfg.selectivities);
    // wider ranges return more records
    assert!(report.rows[5].results > report.rows[0].results);
}

#[test]
fn repair_rows_follow_interval() {
    let mut cfg = small("validation");
    cfg.apply_str("update_ratio=0.3\nrepair_interval=2500").unwrap();
    let report = cmd_repair(&cfg).unwrap();
    let repairs: Vec<_> = report.rows.iter().filter(|r| r.phase == "repair").collect();
    assert_eq!(repairs.iter().map(|r| r.records).collect::<Vec<_>>(), vec![2500, 5000, 7500, 10000]);
    assert!(repairs.iter().any(|r| r.results > 0));
    cfg.strategy = StrategyKind::Eager;
    assert!(matches!(cmd_repair(&cfg), Err(BenchError::Config(e)) if e.field == "strategy"));
}

#[test]
fn threaded_ingest_keeps_counts() {
    let mut cfg = small("mutable-bitmap");
    cfg.apply_str("threads=4\nupdate_ratio=0.2").unwrap();
    let report = cmd_ingest(&cfg).unwrap();
    assert_eq!(report.rows.iter().map(|r| r.ops).sum::<u64>(), 10_000);
}

#[test]
fn config_errors_name_the_field() {
    let mut cfg = BenchConfig::default();
    let e = cfg.set("update_ratio", "abc").unwrap_err();
    assert_eq!(e.field, "update_ratio");
    let e = cfg.set("strategy", "lazy").unwrap_err();
    assert_eq!(e.field, "strategy");
    let e = cfg.apply_str("nonsense=1").unwrap_err();
    assert_eq!(e.field, "nonsense");
    cfg.set("update_ratio", "1.5").unwrap();
    assert_eq!(cfg.validate().unwrap_err().field, "update_ratio");
    let mut cfg = BenchConfig::default();
    cfg.apply_str("strategy=eager\nrepair=merge").unwrap();
    assert_eq!(cfg.validate().unwrap_err().field, "repair");
}

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_auxlsm-bench"))
}

#[test]
fn binary_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bench.conf");
    std::fs::write(&conf, "# sweep\nrecords=50000\nselectivities=0.5\nqueries_per_selectivity=2\npage_size=4096\n").unwrap();
    let out = dir.path().join("q.csv");
    let status = bench()
        .args(["query", "--config", conf.to_str().unwrap(), "--records", "2000", "--selectivities", "0.001,0.01"])
        .args(["--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], auxlsm_bench::report::header().join(","));
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",2000,"));
}

#[test]
fn binary_reports_bad_field_and_fails() {
    let out = bench().args(["ingest", "--dist", "pareto"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`dist`"), "{err}");
}

#[test]
fn binary_verify_prints_pass() {
    let out = bench()
        .args(["verify", "--records", "3000", "--update-ratio", "0.4", "--strategy", "validation"])
        .args(["--set", "page_size=4096", "--set", "memory_budget_bytes=65536"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS verify"));
}
