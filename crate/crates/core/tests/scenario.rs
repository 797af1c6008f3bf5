use elastowave::scenario::{
    convergence_study, resolvent_check, run_scenario, write_outputs, InitialKind, Problem, ScenarioConfig,
};
use elastowave::Error;

fn quick(t_end: f64) -> ScenarioConfig {
    let mut c = ScenarioConfig::reference();
    c.time.t_end = t_end;
    c
}

#[test]
fn config_json_round_trip() {
    let mut c = ScenarioConfig::reference();
    c.initial = InitialKind::Bump;
    c.analysis.spectrum = true;
    let back = ScenarioConfig::from_json(&c.to_json()).unwrap();
    assert_eq!(back, c);
    assert!(c.to_json().contains("\"T\": 40.0"));
}

#[test]
fn optional_sections_take_defaults() {
    let text = r#"{
        "geometry": {"kind": "annulus", "r_in": 1, "r_out": 2, "h": 0.25, "delta": 1},
        "material": {"lambda": 1, "alpha": 1},
        "damping": {"a0": 1, "eps": 0.3},
        "boundary": {"f": 1, "g": 1, "h": 1},
        "time": {"dt": 0.01, "T": 1}
    }"#;
    let c = ScenarioConfig::from_json(text).unwrap();
    assert_eq!(c.initial, InitialKind::Profile);
    assert_eq!(c.analysis.n_modes, 6);
    assert_eq!(c.store_stride(), 10);
    assert_eq!(c.output, std::path::PathBuf::from("out"));
}

#[test]
fn invalid_configs_are_rejected_with_their_category() {
    let mut text = ScenarioConfig::reference().to_json();
    text = text.replacen("\"lambda\"", "\"lambda_typo\"", 1);
    assert!(matches!(ScenarioConfig::from_json(&text), Err(Error::Format(_))));

    let mut c = ScenarioConfig::reference();
    c.boundary.g = 0.0;
    assert!(matches!(c.validate(), Err(Error::Assumption(_))));

    let mut c = ScenarioConfig::reference();
    c.time.dt = -0.1;
    assert!(matches!(c.validate(), Err(Error::Parameter(_))));

    let mut c = ScenarioConfig::reference();
    c.analysis.audit = true;
    c.time.store_stride = Some(4);
    assert!(matches!(c.validate(), Err(Error::Parameter(_))));

    let mut c = ScenarioConfig::reference();
    c.geometry.x0 = vec![0.0, 0.0, 0.0];
    assert!(matches!(c.validate(), Err(Error::Parameter(_))));
}

#[test]
fn wide_collar_is_a_region_overlap() {
    let mut c = ScenarioConfig::reference();
    c.damping.eps = 0.95;
    let err = Problem::build(&c).unwrap_err();
    assert!(matches!(err, Error::RegionOverlap(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn initial_data_kinds() {
    let mut c = ScenarioConfig::reference();
    let p = Problem::build(&c).unwrap();
    let profile = p.initial_state();
    c.initial = InitialKind::Bump;
    let bump = Problem::build(&c).unwrap().initial_state();
    assert!(profile.u.iter().chain(&profile.z).chain(&profile.w).all(|x| *x == 0.0));
    assert_ne!(profile.v, bump.v);
    // the bump vanishes on Γ1, the profile does not
    let layout = &p.sys.layout;
    let free = p.sys.free();
    let on_gamma1 = |s: &elastowave::evolution::State| {
        let field = free.expand(&s.v);
        layout.nodes.iter().map(|&v| field[v].norm()).fold(0.0, f64::max)
    };
    assert!(on_gamma1(&bump) < 1e-12);
    assert!(on_gamma1(&profile) > 0.5);
}

#[test]
fn resolvent_check_passes_on_the_reference_mesh() {
    let p = Problem::build(&ScenarioConfig::reference()).unwrap();
    let r = resolvent_check(&p, 5, 1).unwrap();
    assert!(r.checks.iter().all(|c| c.passed), "{:?}", r.checks);
    assert!(r.reconstruction_exact);
}

#[test]
fn scenario_run_writes_its_outputs() {
    let mut c = quick(1.0);
    c.analysis.audit = true;
    c.analysis.poincare = true;
    let out = run_scenario(&c).unwrap();
    assert!(out.summary.failed_checks().is_empty(), "{:?}", out.summary.failed_checks());
    assert!(out.summary.audit.is_some() && out.summary.poincare.is_some() && out.summary.spectrum.is_none());
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();
    for f in ["mesh.txt", "energy.csv", "summary.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["energy"]["e0"].as_f64().unwrap() > 0.0);
    assert!(summary["checks"].as_array().unwrap().len() >= 3);
    let mesh = elastowave::geometry::Mesh::read(&dir.path().join("mesh.txt")).unwrap();
    assert_eq!(mesh, out.problem.mesh);
}

#[test]
fn spectrum_summary_reports_its_method() {
    let mut c = quick(0.5);
    c.analysis.spectrum = true;
    c.analysis.n_modes = 2;
    let out = run_scenario(&c).unwrap();
    let s = out.summary.spectrum.unwrap();
    assert_eq!(s.modes.len(), 2);
    assert_eq!(s.abscissa, s.modes[0].re);
    assert_eq!(s.energy_rate, 2.0 * s.abscissa.abs());
    let json = serde_json::to_value(&s).unwrap();
    assert_eq!(json["method"], "dense");
}

#[test]
fn convergence_study_over_two_levels() {
    let mut c = quick(0.2);
    c.initial = InitialKind::Bump;
    let table = convergence_study(&c, 2).unwrap();
    assert_eq!(table.levels.len(), 2);
    assert_eq!(table.orders.len(), 1);
    assert!(table.levels[1].h < table.levels[0].h);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("conv.csv");
    table.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(2).unwrap().contains("round-off"));
    assert!(matches!(convergence_study(&c, 1), Err(Error::Parameter(_))));
}
