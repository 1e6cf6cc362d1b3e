mod common;

use std::fs;

use wedge_dla::config::parse_config;
use wedge_dla::dla::{AttachRecord, Aggregate};
use wedge_dla::runner::{replay, run, verify_directory, FileStatus, RunError};
use wedge_dla::store::{
    load_aggregate, load_report, persist_aggregate, ExperimentReport, RunManifest, StoreError, AGGREGATE_CSV,
};

#[test]
fn large_aggregate_round_trips_bit_exactly() {
    let spec = common::wedge("0/1", "1/0");
    let order = common::bfs_order(&spec, 200.0, 10_000);
    assert_eq!(order.len(), 10_000);
    let records: Vec<AttachRecord> = order
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, p)| AttachRecord { n: n as u64, site: *p, steps: (n as f64).sqrt() * 1.0e3 + 0.1, restarts: (n % 7) as u32 })
        .collect();
    let agg = Aggregate::from_order(spec, &order, records).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let digests = persist_aggregate(dir.path(), &agg).unwrap();
    let back = load_aggregate(dir.path(), spec, &digests).unwrap();
    assert_eq!(back, agg);
    assert_eq!(back.records(), agg.records());

    let path = dir.path().join(AGGREGATE_CSV);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, &text[..text.len() - 10]).unwrap();
    assert!(matches!(load_aggregate(dir.path(), spec, &digests), Err(StoreError::Digest { .. })));
}

#[test]
fn empty_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let digests = wedge_dla::store::persist_report(dir.path(), &ExperimentReport::default()).unwrap();
    assert_eq!(load_report(dir.path(), &digests).unwrap(), ExperimentReport::default());
}

#[test]
fn grow_replay_is_identical_across_worker_counts() {
    let req = parse_config("theta1 = 0/1\ntheta2 = 1/1\nparticles = 1000\nseed = 42\n").unwrap();
    let root = tempfile::tempdir().unwrap();
    let original = run(&req, &root.path().join("orig")).unwrap();
    assert!(original.checks_passed, "{original:?}");
    for d in verify_directory(&root.path().join("orig")).unwrap() {
        assert!(d.passed, "{}: {}", d.name, d.detail);
    }
    for workers in [1, 4, 16] {
        let r = replay(&original, &root.path().join(format!("w{workers}")), Some(workers)).unwrap();
        assert!(r.certified, "workers {workers}: {:?}", r.files);
    }
    let a = fs::read(root.path().join("orig").join(AGGREGATE_CSV)).unwrap();
    let b = fs::read(root.path().join("w16").join(AGGREGATE_CSV)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mc_replay_is_identical_across_worker_counts() {
    let req = parse_config("command = ring\ntheta1 = -1/0\ntheta2 = 1/0\nr = 32\ntrials = 3000\nworkers = 1\n").unwrap();
    let root = tempfile::tempdir().unwrap();
    let original = run(&req, &root.path().join("orig")).unwrap();
    for workers in [4, 16] {
        let r = replay(&original, &root.path().join(format!("w{workers}")), Some(workers)).unwrap();
        assert!(r.certified, "workers {workers}: {:?}", r.files);
    }
}

#[test]
fn tampered_seed_is_detected() {
    let req = parse_config("theta2 = 1/2\nparticles = 60\nseed = 3\n").unwrap();
    let root = tempfile::tempdir().unwrap();
    let mut manifest = run(&req, &root.path().join("orig")).unwrap();
    manifest.seed = 4;
    let r = replay(&manifest, &root.path().join("tampered"), None).unwrap();
    assert!(!r.certified);
    assert!(r.files.iter().any(|f| f.name == AGGREGATE_CSV && f.status == FileStatus::Mismatch));
}

#[test]
fn version_mismatch_refuses_to_certify() {
    let req = parse_config("theta2 = 1/2\nparticles = 5\n").unwrap();
    let root = tempfile::tempdir().unwrap();
    let mut manifest = run(&req, &root.path().join("orig")).unwrap();
    manifest.artifact_version = "wedge-dla 0.0.0 format 0".into();
    manifest.write(&root.path().join("orig")).unwrap();
    let reread = RunManifest::read(&root.path().join("orig")).unwrap();
    let err = replay(&reread, &root.path().join("again"), None).unwrap_err();
    assert!(matches!(err, RunError::Store(StoreError::Version { .. })));
}

#[test]
fn every_csv_has_a_header_and_a_manifest() {
    let root = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("grow", "theta2 = 1/3\nparticles = 40\n"),
        ("dominance", "command = dominance\ntheta2 = 1/1\nsets = 2\n"),
        ("oracle", "command = oracle\ntheta2 = 1/1\nradius = 12\nsource = 8,2\n"),
    ] {
        let dir = root.path().join(name);
        let m = run(&parse_config(text).unwrap(), &dir).unwrap();
        assert!(m.checks_passed, "{name}: {m:?}");
        assert!(dir.join("manifest.json").exists());
        for d in &m.outputs {
            if d.name.ends_with(".csv") {
                let body = fs::read_to_string(dir.join(&d.name)).unwrap();
                let header = body.lines().next().unwrap();
                assert!(header.chars().all(|c| c.is_ascii_lowercase() || c == ',' || c == '_'), "{}: {header}", d.name);
            }
        }
    }
}
