use super::*;

fn config(scenario: &str, checks: &[&str]) -> RunConfig {
    RunConfig {
        scenario: scenario.into(),
        checks: checks.iter().map(|s| s.to_string()).collect(),
        grid_n: 16,
        ..Default::default()
    }
}

fn names(order: &[&CheckDef]) -> Vec<&'static str> {
    order.iter().map(|c| c.name).collect()
}

#[test]
fn registry_names_and_entries_are_unique_per_check() {
    let mut seen = BTreeSet::new();
    for c in CHECKS {
        assert!(seen.insert(c.name), "duplicate check {}", c.name);
        let mut entries = BTreeSet::new();
        for e in c.entries {
            assert!(entries.insert(e.name), "duplicate entry {} in {}", e.name, c.name);
            assert!(!e.anchor.is_empty());
        }
        for d in c.deps {
            let pos = |n: &str| CHECKS.iter().position(|x| x.name == n).unwrap();
            assert!(pos(d) < pos(c.name), "{} must come after its dependency {d}", c.name);
        }
    }
}

#[test]
fn resolve_closes_dependencies_in_registry_order() {
    let order = resolve(&["diagram".into()]).unwrap();
    assert_eq!(
        names(&order),
        ["atlas", "spray_axioms", "transport", "ehresmann", "lifted_spray", "vertical_spray", "diagram"]
    );
    assert_eq!(resolve(&["all".into()]).unwrap().len(), CHECKS.len());
    assert_eq!(names(&resolve(&["atlas".into(), "atlas".into()]).unwrap()), ["atlas"]);
}

#[test]
fn unknown_names_are_config_errors() {
    assert!(matches!(run(&config("flat_projection", &["nope"])), Err(Error::UnknownCheck(_))));
    assert!(matches!(run(&config("klein", &["atlas"])), Err(Error::UnknownScenario(_))));
    let mut cfg = config("flat_projection", &["atlas"]);
    cfg.tolerances.insert("not_an_entry".into(), 1.0);
    assert!(matches!(run(&cfg), Err(Error::ConfigParse(_))));
    cfg.tolerances.clear();
    cfg.grid_n = 3;
    assert!(run(&cfg).is_err());
    assert!(matches!(run(&config("flat_projection", &[])), Err(Error::ConfigParse(_))));
}

#[test]
fn config_json_rejects_unknown_fields_and_fills_defaults() {
    let cfg: RunConfig = serde_json::from_str(r#"{"scenario":"hopf","seed":7}"#).unwrap();
    assert_eq!(cfg.scenario, "hopf");
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.grid_n, 64);
    assert_eq!(cfg.checks, ["all"]);
    assert!(serde_json::from_str::<RunConfig>(r#"{"sceanrio":"hopf"}"#).is_err());
}

#[test]
fn flat_projection_passes_every_check() {
    let out = run(&config("flat_projection", &["all"])).unwrap();
    let r = &out.report;
    assert!(r.overall, "{:#?}", r.entries.iter().filter(|e| !e.ok()).collect::<Vec<_>>());
    let declared: usize = CHECKS.iter().map(|c| c.entries.len()).sum();
    assert_eq!(r.entries.len(), declared);
    for e in &r.entries {
        assert!(e.n_samples > 0, "{} has no samples", e.check);
        assert!(e.error.is_none());
        assert_eq!(e.pass, !e.expected_fail, "{}", e.check);
    }
    assert!(out.files.contains_key("plot/convergence.csv"));
    assert!(out.files.contains_key("plot/diagram_residuals.csv"));
    assert!(!out.files.keys().any(|k| k.starts_with("traces/")));
}

#[test]
fn mismatched_addition_is_reported_as_expected_failure() {
    let out = run(&config("twisted_flat", &["mismatched_sigma"])).unwrap();
    let e = out.report.entries.iter().find(|e| e.group == "mismatched_sigma").unwrap();
    assert!(e.expected_fail);
    assert!(!e.pass);
    assert!(e.max_residual > 1e-2);
    assert!(e.ok());
    assert!(out.report.overall);
}

#[test]
fn tolerance_overrides_apply_by_entry_name() {
    let mut cfg = config("flat_projection", &["atlas"]);
    cfg.tolerances.insert("atlas_cocycle".into(), -1.0);
    let out = run(&cfg).unwrap();
    let e = out.report.entries.iter().find(|e| e.check == "atlas_cocycle").unwrap();
    assert_eq!(e.tolerance, -1.0);
    assert!(!e.pass);
    assert!(!out.report.overall);
}

#[test]
fn reports_are_byte_identical_for_a_fixed_seed() {
    let cfg = config("twisted_flat", &["spray_axioms", "flow_homogeneity", "pushforward"]);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a.report_json().unwrap(), b.report_json().unwrap());
    assert_eq!(a.files, b.files);
}

#[test]
fn check_streams_do_not_depend_on_other_checks() {
    let alone = run(&config("twisted_flat", &["atlas", "spray_axioms"])).unwrap();
    let more = run(&config("twisted_flat", &["integrator_order", "spray_axioms"])).unwrap();
    let pick = |o: &RunOutput| o.report.entries.iter().filter(|e| e.group == "spray_axioms").cloned().collect::<Vec<_>>();
    assert_eq!(pick(&alone), pick(&more));
}

#[test]
fn output_dir_is_not_echoed_and_files_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let mut cfg = config("flat_projection", &["integrator_order"]);
    cfg.output_dir = Some(dir.clone());
    cfg.emit_traces = true;
    let out = run(&cfg).unwrap();
    let json = out.report_json().unwrap();
    assert!(!json.contains("output_dir"));
    assert!(json.ends_with("}\n"));
    out.write(&dir).unwrap();
    for rel in ["report.json", "plot/convergence.csv", "traces/horizontal_geodesic.csv", "traces/loop.csv"] {
        assert!(dir.join(rel).is_file(), "missing {rel}");
    }
}

#[test]
fn rk4_orders_are_near_four() {
    assert!((exponential_order().unwrap().order - 4.0).abs() < 0.3);
    assert!((sphere_geodesic_order().unwrap().order - 4.0).abs() < 0.3);
}

#[test]
fn listing_names_every_check_and_scenario() {
    let text = listing();
    for c in CHECKS {
        assert!(text.contains(c.name));
    }
    for s in SCENARIOS {
        assert!(text.contains(s));
    }
}

#[test]
fn probe_reports_positive_radii() {
    let p = probe("flat_projection", &IntegratorConfig::default()).unwrap();
    assert!(p.omega.h_radius > 0.0 && p.omega.v_radius > 0.0);
}
