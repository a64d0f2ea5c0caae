use std::path::Path;
use std::process::Command;

use levy_rds::harness::RunManifest;

fn levy_rds() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_levy-rds"));
    c.env_remove("LEVY_RDS_SEED");
    c
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

const DRIFT_ONLY: &str = "kind = \"simulate-levy\"\nseed = 1\n[triplet]\ndrift = [0.2]\ndiffusion = []\njump_rate = 0.0\n[numerics]\ndt = 0.01\n";

#[test]
fn simulate_levy_succeeds_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DRIFT_ONLY);
    let out = dir.path().join("run");
    let st = levy_rds().args(["simulate-levy", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(String::from_utf8_lossy(&st.stdout).contains("PASS path-csv-round-trip"));
    let m = RunManifest::read(&out).unwrap();
    m.validate(&out).unwrap();
    assert_eq!(m.seed, 1);
}

#[test]
fn seed_precedence_is_flag_then_env_then_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DRIFT_ONLY);
    let run = |env: Option<&str>, flag: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut c = levy_rds();
        c.args(["simulate-levy", "--config"]).arg(&cfg).arg("--out").arg(&out);
        if let Some(e) = env {
            c.env("LEVY_RDS_SEED", e);
        }
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        assert!(c.output().unwrap().status.success());
        RunManifest::read(&out).unwrap().seed
    };
    assert_eq!(run(None, None, "a"), 1);
    assert_eq!(run(Some("7"), None, "b"), 7);
    assert_eq!(run(Some("7"), Some("11"), "c"), 11);
}

#[test]
fn bad_config_exits_with_two_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "kind = \"simulate-levy\"\n[triplet]\njump_rte = 2.0\n");
    let st = levy_rds().args(["simulate-levy", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("jump_rte"));
}

#[test]
fn unknown_kind_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DRIFT_ONLY);
    let st = levy_rds().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn failing_check_gives_exit_status_one() {
    let dir = tempfile::tempdir().unwrap();
    // A tolerance no discretization meets.
    let cfg = write_config(
        dir.path(),
        "kind = \"ito-conjugacy\"\nseed = 2\n[numerics]\ndt = 0.01\ntail = 4.0\ntolerance = 1e-300\n",
    );
    let out = dir.path().join("run");
    let st = levy_rds().args(["ito-conjugacy", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(1), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(String::from_utf8_lossy(&st.stdout).contains("FAIL conjugacy-residual"));
    assert!(!RunManifest::read(&out).unwrap().pass);
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let cfg = levy_rds::harness::load_config(&std::fs::read_to_string(&p).unwrap());
        assert!(cfg.is_ok(), "{}: {:?}", p.display(), cfg.err());
        assert_eq!(cfg.unwrap().kind.name(), p.file_stem().unwrap().to_str().unwrap());
        n += 1;
    }
    assert_eq!(n, 6);
}
