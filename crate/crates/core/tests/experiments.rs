use std::fs;

use stagewise::harness::{self, ExperimentConfig, Replayed, FLOW_HEADER, RF_HEADER};
use stagewise::kernels::build_dot_kernel;
use stagewise::oracleflow::oracle_risk;
use stagewise::spheredata::TargetFunction;
use stagewise::{Activation, Error};

fn tiny(extra: &[&str]) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.apply_overrides(&[
        "d=8",
        "n=12",
        "trials=2",
        "test_set_size=40",
        "t_min_exponent=-1",
        "t_max_exponent=2",
        "points_per_decade=3",
        "K=12",
    ])
    .unwrap();
    c.apply_overrides(extra).unwrap();
    c
}

#[test]
fn truncation_degree_does_not_move_results_at_d400() {
    let d = 400;
    let act = Activation::relu();
    let lo = build_dot_kernel(&act, d, 20).unwrap();
    let hi = build_dot_kernel(&act, d, 40).unwrap();
    let target = TargetFunction::staircase();
    let n_lo = target.degree_norms(d, 20).unwrap();
    let n_hi = target.degree_norms(d, 40).unwrap();
    for e in [0.0, 1.0, 2.0, 3.0, 4.0] {
        let t = 10f64.powf(e);
        let (a, b) = (oracle_risk(&lo, &n_lo, 0.0, t).unwrap(), oracle_risk(&hi, &n_hi, 0.0, t).unwrap());
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-12), "t = {t}: {a} vs {b}");
    }
    for s in [-0.5, -0.1, 0.0, 0.2, 0.7] {
        let (a, b) = (lo.kernel_value(s), hi.kernel_value(s));
        // The ReLU series tail decays only polynomially in k once |s| is large.
        assert!((a - b).abs() <= 1e-6 * b.abs(), "s = {s}: {a} vs {b}");
    }
}

#[test]
fn flow_run_writes_csv_and_svg_and_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    let cfg = tiny(&[&format!("output={}", path.display())]);
    let curves = harness::run_flow_experiment(&cfg).unwrap();
    let first = fs::read_to_string(&path).unwrap();
    assert!(first.starts_with("# "));
    assert_eq!(first.lines().nth(1), Some(FLOW_HEADER));
    assert_eq!(first.lines().count(), 2 + curves.times.len());
    assert!(fs::read_to_string(path.with_extension("svg")).unwrap().contains("<svg"));

    harness::run_flow_experiment(&cfg).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), first);

    let copy = dir.path().join("replayed.csv");
    let (rcfg, out) = harness::replay(&path, Some(copy.clone())).unwrap();
    assert!(matches!(out, Replayed::Flow(_)));
    assert_eq!(rcfg.output.as_deref(), Some(copy.as_path()));
    let replayed = fs::read_to_string(&copy).unwrap();
    // Only the recorded output path may differ.
    let strip = |s: &str| s.replace(&copy.display().to_string(), &path.display().to_string());
    assert_eq!(strip(&replayed), first);
}

#[test]
fn rf_run_writes_its_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rf.csv");
    let cfg = tiny(&[&format!("output={}", path.display()), "N=32", "steps=20", "batch=4", "lr=0.2"]);
    let curves = harness::run_rf_experiment(&cfg).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().nth(1), Some(RF_HEADER));
    assert_eq!(text.lines().count(), 2 + curves.iterations.len());
    assert!(text.lines().next().unwrap().contains("mode=rf"));
    let (again, out) = harness::replay(&path, None).unwrap();
    assert_eq!(again, cfg);
    let Replayed::Rf(c) = out else { panic!("expected rf replay") };
    assert_eq!(harness::rf_csv(&c), harness::rf_csv(&curves));
}

#[test]
fn unwritable_output_is_an_io_error_and_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("run.csv");
    let cfg = tiny(&[&format!("output={}", path.display())]);
    let err = harness::run_flow_experiment(&cfg).unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err}");
    assert!(err.is_config_error());
    assert!(!path.exists());
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.cfg");
    let cfg = tiny(&["activation=relu+0.1*he3", "sigma_eps2=0.5", "seed=9"]);
    let text: String = cfg.to_pairs().iter().map(|(k, v)| format!("{k} = {v}  # set\n")).collect();
    fs::write(&path, text).unwrap();
    assert_eq!(ExperimentConfig::from_file(&path).unwrap(), cfg);
    assert!(ExperimentConfig::from_file(&dir.path().join("nope.cfg")).unwrap_err().is_config_error());
}
