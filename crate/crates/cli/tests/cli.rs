use std::path::Path;
use std::process::{Command, Output};

fn srlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srlab")).args(args).env("SRLAB_OUT", out).output().expect("binary runs")
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn flat_projection_all_checks_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let o = srlab(&["run", "--scenario", "flat_projection", "--checks", "all", "--grid-n", "16"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(tmp.path());
    assert_eq!(r["schema"], 1);
    assert_eq!(r["overall"], true);
    assert!(tmp.path().join("plot/convergence.csv").is_file());
    assert!(tmp.path().join("plot/diagram_residuals.csv").is_file());
}

#[test]
fn fixed_seed_gives_byte_identical_reports() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["run", "--scenario", "hopf", "--checks", "diagram,pushforward", "--seed", "7", "--grid-n", "16"];
    for d in [&a, &b] {
        assert_eq!(srlab(&args, d.path()).status.code(), Some(0));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("report.json")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn mismatched_sigma_fails_by_design_without_failing_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = srlab(&["run", "--scenario", "twisted_flat", "--checks", "mismatched_sigma", "--grid-n", "16"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(tmp.path());
    let e = r["entries"].as_array().unwrap().iter().find(|e| e["group"] == "mismatched_sigma").unwrap();
    assert_eq!(e["check"], "pushforward_linearity");
    assert_eq!(e["pass"], false);
    assert_eq!(e["expected_fail"], true);
}

#[test]
fn failing_check_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = srlab(&["run", "--checks", "atlas", "--tol", "atlas_cocycle=-1"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(report(tmp.path())["overall"], false);
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["run", "--bogus"][..],
        &["run", "--checks", "nope"],
        &["run", "--scenario", "klein"],
        &["run", "--tol", "diagram"],
        &["run", "--tol", "no_such_entry=1e-3"],
    ] {
        let o = srlab(args, tmp.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"scenario": "hopf", "checks": ["atlas"], "seed": 3}"#).unwrap();
    let out = tmp.path().join("out");
    let o = srlab(&["run", "--config", cfg.to_str().unwrap(), "--scenario", "twisted_flat", "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["header"]["config"]["scenario"], "twisted_flat");
    assert_eq!(r["header"]["config"]["seed"], 3);
    assert_eq!(r["header"]["checks_run"], serde_json::json!(["atlas"]));

    std::fs::write(&cfg, r#"{"scenaro": "hopf"}"#).unwrap();
    assert_eq!(srlab(&["run", "--config", cfg.to_str().unwrap()], tmp.path()).status.code(), Some(2));
}

#[test]
fn list_shows_scenarios_and_check_anchors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = srlab(&["list"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["flat_projection", "twisted_flat", "hopf", "diagram", "pushforward", "mismatched_sigma"] {
        assert!(text.contains(name), "{name}");
    }
    assert!(text.contains("p(Σ_M(v ⊕ h)) = Σ_N(Tp h)"));
}

#[test]
fn probe_prints_json() {
    let tmp = tempfile::tempdir().unwrap();
    let o = srlab(&["probe", "--scenario", "twisted_flat"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["omega"]["h_radius"].as_f64().unwrap() > 0.0);
}
