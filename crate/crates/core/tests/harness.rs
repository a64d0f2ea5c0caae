use levy_rds::harness::{load_config, run, ExperimentConfig, ExperimentKind, RunManifest};
use levy_rds::table::Table;
use levy_rds::Error;

fn drift_only(seed: u64) -> ExperimentConfig {
    let text = format!(
        "kind = \"simulate-levy\"\nseed = {seed}\n[triplet]\ndrift = [0.7]\ndiffusion = []\njump_rate = 0.0\n[numerics]\ndt = 0.01\n"
    );
    load_config(&text).unwrap()
}

#[test]
fn misspelled_key_is_rejected_by_name() {
    let err = load_config("kind = \"simulate-levy\"\n[triplet]\njump_rte = 1.0\n").unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("jump_rte"), "{err}");
}

#[test]
fn syntax_errors_carry_a_location() {
    let err = load_config("kind = \"simulate-levy\"\nseed = = 3\n").unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn type_mismatch_and_unknown_kind_are_errors() {
    assert!(load_config("kind = \"simulate-levy\"\nseed = \"x\"\n").is_err());
    assert!(load_config("kind = \"simulate\"\n").is_err());
    assert!("verify-all".parse::<ExperimentKind>().is_ok());
    assert!("verify_all".parse::<ExperimentKind>().is_err());
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = load_config("# minimal\nkind = \"attractor\"\nseed = 9\n").unwrap();
    assert_eq!(cfg, ExperimentConfig::new(ExperimentKind::Attractor, 9));
}

#[test]
fn nonpositive_numerics_are_rejected() {
    assert!(load_config("kind = \"linearize\"\n[numerics]\ndt = 0.0\n").is_err());
    assert!(load_config("kind = \"linearize\"\n[numerics]\nanchors = [1.0]\n").is_err());
    assert!(load_config("kind = \"linearize\"\n[triplet.jumps]\nlaw = \"cauchy\"\n").is_err());
}

#[test]
fn anchors_are_sorted_and_deduplicated() {
    let cfg = load_config("kind = \"ito-conjugacy\"\n[numerics]\nanchors = [1.0, -2.0, 1.0, 0.0, -2.0]\n").unwrap();
    assert_eq!(cfg.numerics.anchors, vec![-2.0, 0.0, 1.0]);
}

#[test]
fn drift_only_simulation_writes_one_csv_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&drift_only(3), dir.path()).unwrap();
    assert!(m.pass, "{m:?}");
    let csvs: Vec<_> = m.outputs.iter().filter(|o| o.file.ends_with(".csv")).collect();
    assert_eq!(csvs.len(), 1);
    let t = Table::read_file(&dir.path().join("path.csv")).unwrap();
    assert_eq!(t.header, ["t", "L_1", "is_jump"]);
    for row in &t.rows {
        assert!((row[1] - 0.7 * row[0]).abs() < 1e-12);
        assert_eq!(row[2], 0.0);
    }
    let back = RunManifest::read(dir.path()).unwrap();
    assert_eq!(back.outputs, m.outputs);
    assert_eq!(back.config, m.config);
    back.validate(dir.path()).unwrap();
}

#[test]
fn tampered_output_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&drift_only(1), dir.path()).unwrap();
    std::fs::write(dir.path().join("path.csv"), "t,L_1,is_jump\n").unwrap();
    assert!(m.validate(dir.path()).is_err());
}

#[test]
fn same_seed_gives_identical_checksums() {
    let mut cfg = load_config("kind = \"simulate-levy\"\nseed = 5\n").unwrap();
    cfg.numerics.dt = 0.01;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run(&cfg, a.path()).unwrap();
    let mb = run(&cfg, b.path()).unwrap();
    assert_eq!(ma.outputs, mb.outputs);
    cfg.seed = 6;
    let mc = run(&cfg, a.path()).unwrap();
    assert_ne!(ma.outputs[0].sha256, mc.outputs[0].sha256);
}

#[test]
fn csv_uses_lf_and_dot_decimals() {
    let dir = tempfile::tempdir().unwrap();
    run(&drift_only(2), dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("path.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 3));
    let gp = std::fs::read_to_string(dir.path().join("path.gp")).unwrap();
    assert!(gp.contains("set datafile separator ','") && gp.contains("'path.csv' using 1:2"));
}

#[test]
fn conjugacy_experiments_record_their_residual() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentKind::ItoConjugacy, 4);
    cfg.numerics.dt = 4e-3;
    cfg.numerics.tail = 8.0;
    let m = run(&cfg, dir.path()).unwrap();
    assert!(m.error.is_none(), "{m:?}");
    assert_eq!(m.checks[0].name, "conjugacy-residual");
    assert!(m.checks[0].measured < 0.2, "{m:?}");

    cfg.kind = ExperimentKind::MarcusConjugacy;
    let m = run(&cfg, dir.path()).unwrap();
    assert!(m.error.is_none(), "{m:?}");
    assert!(m.pass, "{:?}", m.checks);
}

#[test]
fn failing_experiment_still_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentKind::ItoConjugacy, 0);
    // Dimension mismatch between x0 and the scalar system.
    cfg.numerics.x0 = vec![1.0, 2.0];
    cfg.numerics.tail = 2.0;
    cfg.numerics.dt = 0.01;
    let m = run(&cfg, dir.path()).unwrap();
    assert!(!m.pass);
    assert!(m.error.as_deref().unwrap().contains("x0"));
    assert_eq!(RunManifest::read(dir.path()).unwrap().error, m.error);
}

#[test]
fn linearize_writes_suite_spectrum_and_step2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentKind::Linearize, 8);
    cfg.numerics.dt = 0.01;
    cfg.numerics.tail = 6.0;
    cfg.numerics.lyapunov_horizon = 5.0;
    cfg.numerics.n_samples = 4;
    cfg.numerics.anchors = vec![-1.0, 0.0, 1.0];
    let m = run(&cfg, dir.path()).unwrap();
    assert!(m.error.is_none(), "{m:?}");
    for f in ["suite.txt", "spectrum.csv", "step2.csv", "ladder.csv"] {
        assert!(m.outputs.iter().any(|o| o.file == f), "{f} missing");
    }
    assert!(m.checks.iter().any(|c| c.name == "step2-residual"));
    m.validate(dir.path()).unwrap();
}

#[test]
fn builtin_system_names_are_kebab_case() {
    for name in ["linear-1d", "affine-marcus", "duffing-van-der-pol", "scalar-hartman", "custom"] {
        let text = format!("kind = \"linearize\"\n[system]\nbuiltin = \"{name}\"\n");
        assert!(load_config(&text).is_ok(), "{name}");
    }
}

proptest::proptest! {
    #[test]
    fn config_echo_round_trips(seed in proptest::prelude::any::<u64>(), dt in 1e-4f64..1.0, anchors in proptest::collection::vec(-5.0f64..5.0, 2..6)) {
        let mut cfg = ExperimentConfig::new(ExperimentKind::ItoConjugacy, seed);
        cfg.numerics.dt = dt;
        cfg.numerics.anchors = anchors;
        cfg.numerics.anchors.sort_by(f64::total_cmp);
        cfg.numerics.anchors.dedup();
        proptest::prop_assume!(cfg.numerics.anchors.len() >= 2);
        let text = toml::to_string(&cfg).unwrap();
        proptest::prop_assert_eq!(load_config(&text).unwrap(), cfg);
    }
}
