use std::path::Path;
use std::process::{Command, Output};

fn homeflex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homeflex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn config_prints_resolved_toml_with_overrides() {
    let o = homeflex(&["config", "--method", "iql+opt", "--n-homes", "5", "--seeds", "1,2,3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg: homeflex::harness::ExperimentConfig = toml::from_str(&stdout(&o)).unwrap();
    assert_eq!(cfg.method, homeflex::marl::Method::IqlOpt);
    assert_eq!(cfg.n_homes, 5);
    assert_eq!(cfg.seeds, vec![1, 2, 3]);
}

#[test]
fn generate_writes_a_loadable_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scenario");
    let o = homeflex(&["generate", "--seed", "4", "--n-homes", "2", "--n-days", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = homeflex::profiles::load_scenario_csv(&out).unwrap();
    assert_eq!((s.n_homes, s.n_days), (2, 3));
}

fn train(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--n-homes",
        "2",
        "--n-train-episodes",
        "2",
        "--n-train-days",
        "2",
        "--n-eval-days",
        "1",
        "--eval-every",
        "1",
        "--output-dir",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    homeflex(&args)
}

#[test]
fn train_then_evaluate_the_saved_policy() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(dir.path(), &["--method", "iql", "--seeds", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["record.json", "curve.csv", "timing.json", "policies/seed-3/policy.json"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("record.json")).unwrap()).unwrap();
    let trained = record["runs"][0]["method_cost"].as_f64().unwrap();

    let policy = dir.path().join("policies/seed-3");
    let o = homeflex(&[
        "evaluate",
        "--n-homes",
        "2",
        "--n-train-days",
        "2",
        "--n-eval-days",
        "1",
        "--seeds",
        "3",
        "--policy",
        policy.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eval: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(eval["method_cost"].as_f64().unwrap(), trained);
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, "method = \"iql+marginal\"\nn_homes = 4\n[iql]\nalpha = 0.3\n").unwrap();
    let o = homeflex(&["config", "--config", path.to_str().unwrap(), "--n-homes", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg: homeflex::harness::ExperimentConfig = toml::from_str(&stdout(&o)).unwrap();
    assert_eq!(cfg.method, homeflex::marl::Method::IqlMarginal);
    assert_eq!(cfg.n_homes, 2);
    assert_eq!(cfg.iql.alpha, 0.3);
}

#[test]
fn failures_exit_non_zero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "n_homes = 2\nlearning_rate = 0.1\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["config", "--config", bad.to_str().unwrap()],
        vec!["config", "--config", "/nonexistent/exp.toml"],
        vec!["config", "--n-homes", "0"],
        vec!["config", "--method", "qmix"],
        vec!["evaluate", "--policy", dir.path().to_str().unwrap()],
        vec!["benchmark-scaling", "--sizes", "1,2"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let o = homeflex(&args);
        assert!(!o.status.success(), "{args:?} succeeded");
        assert!(!stderr(&o).is_empty(), "{args:?} printed nothing");
    }
}

#[test]
fn failed_training_leaves_no_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario");
    let o = homeflex(&["generate", "--n-homes", "2", "--n-days", "2", "--out", scenario.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("results");
    // Two scenario days; the run asks for three.
    let o = train(&out, &["--scenario-dir", scenario.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("days"), "{}", stderr(&o));
    assert!(!out.join("record.json").exists());
    assert!(!out.join("curve.csv").exists());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let o = homeflex(&["config", "--config", path.to_str().unwrap()]);
            assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
