//! Runs `verify-all` with the default config and prints one PASS/FAIL line per criterion.
//! Run with `cargo test --profile test -p levy-rds-core --test acceptance -- --nocapture`.

use levy_rds::harness::{check_lines, run, ExperimentConfig, ExperimentKind, RunManifest, CRITERIA};

#[test]
fn acceptance_suite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::new(ExperimentKind::VerifyAll, 0);
    let manifest = run(&cfg, dir.path()).unwrap();
    println!("acceptance suite, seed {}, {:.1} s", cfg.seed, manifest.wall_time_s);
    for line in check_lines(&manifest) {
        println!("{line}");
    }
    assert!(manifest.error.is_none(), "{:?}", manifest.error);
    assert_eq!(manifest.checks.len(), CRITERIA.len());
    RunManifest::read(dir.path()).unwrap().validate(dir.path()).unwrap();
    let failed: Vec<&str> = manifest.failed_checks().map(|c| c.name.as_str()).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
