use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn segscreen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segscreen"))
        .args(args)
        .env_remove("SEGSCREEN_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn column(path: &Path, values: impl Iterator<Item = f64>) {
    let text: String = values.map(|v| format!("{v}\n")).collect();
    fs::write(path, text).unwrap();
}

#[test]
fn stats_test_identical_files_give_p_one() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.txt");
    column(&x, (0..30).map(|i| (i as f64 * 0.37).sin()));
    let o = segscreen(&["stats-test", p(&x), p(&x)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["p_value"], 1.0);
    assert_eq!(v["permutations"], 199);
}

#[test]
fn stats_test_separated_samples_hit_the_floor() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.txt"), dir.path().join("y.txt"));
    column(&x, (0..40).map(|i| (i as f64 * 0.61).sin()));
    column(&y, (0..40).map(|i| 10.0 + (i as f64 * 0.43).cos()));
    for stat in ["mmd2", "energy"] {
        let o = segscreen(&["stats-test", p(&x), p(&y), "--statistic", stat, "--seed", "3"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["p_value"], 0.005, "{stat}");
        assert_eq!(v["statistic"], stat);
    }
}

#[test]
fn stats_test_seed_env_matches_flag() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.txt"), dir.path().join("y.txt"));
    column(&x, (0..25).map(|i| (i as f64 * 0.9).sin()));
    column(&y, (0..25).map(|i| 0.2 + (i as f64 * 0.7).sin()));
    let flag = segscreen(&["stats-test", p(&x), p(&y), "--seed", "17"]);
    let env = Command::new(env!("CARGO_BIN_EXE_segscreen"))
        .args(["stats-test", p(&x), p(&y)])
        .env("SEGSCREEN_SEED", "17")
        .output()
        .unwrap();
    assert_eq!(stdout(&flag), stdout(&env));
}

#[test]
fn stats_test_reports_the_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.txt"), dir.path().join("y.txt"));
    let mut text: String = (0..16).map(|i| format!("{i}\n")).collect();
    text.push_str("abc\n");
    fs::write(&x, text).unwrap();
    column(&y, (0..10).map(f64::from));
    let o = segscreen(&["stats-test", p(&x), p(&y)]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("line 17") && err.contains("x.txt"), "{err}");
}

#[test]
fn run_on_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.json");
    fs::write(&m, r#"{"entries": []}"#).unwrap();
    let out = dir.path().join("out");
    let o = segscreen(&["run", "--manifest", p(&m), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_dir(out.join("reports")).unwrap().count(), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cases"], 0);
}

#[test]
fn synth_run_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        "n_cases = 2\nfraction_positive = 0.5\nclutter_rate = 0\nseed = 5\n",
    )
    .unwrap();
    let data = dir.path().join("data");
    let o = segscreen(&["synth", "--spec", p(&spec), "--out", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(data.join("manifest.json").is_file());

    let out = dir.path().join("out");
    let o = segscreen(&[
        "run",
        "--manifest",
        p(&data.join("manifest.json")),
        "--out",
        p(&out),
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("masks/case_0000.sgrid").is_file());

    let report = |id: &str| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(out.join(format!("reports/{id}.json"))).unwrap()).unwrap()
    };
    let pos = report("case_0000");
    assert_eq!(pos["predicted_positive"], true);
    assert!(pos.get("failed_gate").is_none_or(|g| g.is_null()));
    let neg = report("case_0001");
    assert_eq!(neg["predicted_positive"], false);
    let gate = neg["failed_gate"].as_str().expect("negative case names a gate");
    assert!(["L1", "L2", "L3"].contains(&gate), "{gate}");

    let o = segscreen(&["inspect", p(&out.join("reports/case_0001.json"))]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(
        text.contains("case_0001") && text.contains("decision: negative"),
        "{text}"
    );
}

#[test]
fn config_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.json");
    fs::write(&m, r#"{"entries": []}"#).unwrap();
    let cfg = dir.path().join("gates.toml");
    fs::write(&cfg, "[scoring]\ntau_bin = 0.9\n").unwrap();
    let out = dir.path().join("out");
    let bad = segscreen(&["run", "--manifest", p(&m), "--out", p(&out), "--config", p(&cfg)]);
    assert!(!bad.status.success());
    assert!(stderr(&bad).contains("tau_bin"), "{}", stderr(&bad));
    let ok = segscreen(&[
        "run",
        "--manifest",
        p(&m),
        "--out",
        p(&out),
        "--config",
        p(&cfg),
        "--tau-bin",
        "0.4",
    ]);
    assert!(ok.status.success(), "{}", stderr(&ok));
}

#[test]
fn bench_missing_spec_names_the_path() {
    let o = segscreen(&["bench", "--spec", "/nonexistent/bench.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent/bench.toml"), "{}", stderr(&o));
}

#[test]
fn bench_on_a_clean_null_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, "n_cases = 3\nfraction_positive = 0.0\nclutter_rate = 0\n").unwrap();
    let out = dir.path().join("bench.json");
    let o = segscreen(&["bench", "--spec", p(&spec), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("slice specificity"));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["slice_specificity"], 1.0);
    assert_eq!(r["n_cases"], 3);
}
