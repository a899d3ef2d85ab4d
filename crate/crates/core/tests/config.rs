use std::path::Path;

use shs_core::config::{RunConfig, SystemSource, Variant};
use shs_core::experiments::{self, NAMES};
use shs_core::Error;

#[test]
fn canned_configs_resolve() {
    for name in NAMES {
        for (label, cfg) in experiments::canned(name).unwrap().expand().unwrap() {
            let sys = cfg.system(Path::new(".")).unwrap();
            let set = cfg.scenario_set(&sys.state_labels).unwrap();
            assert!(!set.is_empty(), "{name}/{label}");
            let sim = cfg.sim_config(sys.a.nrows()).unwrap();
            assert_eq!(sim.xhat0, vec![2.0, 0.0, 1.0, 0.0]);
        }
    }
}

#[test]
fn variants_override_only_what_they_name() {
    let base = experiments::canned("fig3").unwrap();
    let v = Variant { label: "x".into(), rho: Some(vec![0.5, 0.6]), ..Variant::default() };
    let c = base.with_variant(&v).unwrap();
    assert_eq!(c.channels[0].rho, 0.5);
    assert_eq!(c.channels[1].rho, 0.6);
    assert_eq!(c.observer, base.observer);
    let bad = Variant { label: "y".into(), rho: Some(vec![0.5]), ..Variant::default() };
    assert!(matches!(base.with_variant(&bad), Err(Error::Config(_))));
}

#[test]
fn sigma_overrides_apply_per_scenario() {
    let cfg = experiments::canned("fig3").unwrap();
    let sys = cfg.system(Path::new(".")).unwrap();
    let set = cfg.scenario_set(&sys.state_labels).unwrap();
    assert_eq!(set.scenarios[0].sigma[(1, 1)], 0.01);
    assert_eq!(set.scenarios[1].sigma[(0, 0)], 0.0015);
    assert_eq!(set.scenarios[2].sigma[(0, 0)], 0.002);
}

#[test]
fn grid_sources_are_linearized() {
    let cfg = RunConfig::for_system(SystemSource::Grid("two_bus".into()));
    let sys = cfg.system(Path::new(".")).unwrap();
    assert!(sys.linearized.is_some());
    assert_eq!(sys.state_labels, ["1.delta", "1.omega", "2.delta", "2.omega"]);
}

#[test]
fn config_errors() {
    assert!(RunConfig::from_json("{}").is_err());
    assert!(RunConfig::from_json(r#"{"system":{"grid":"two_bus"},"observer":{"tau":-1,"poles":{"common":[-1]}}}"#).is_err());
    let cfg = RunConfig::from_json(r#"{"system":{"state_space":"nope"}}"#).unwrap();
    assert!(matches!(cfg.system(Path::new(".")), Err(Error::Config(_))));
    let cfg = RunConfig::from_json(r#"{"system":{"grid":"two_bus"},"channels":[{"measure":"7.delta","rho":0.9,"sigma":0.01}]}"#).unwrap();
    let sys = cfg.system(Path::new(".")).unwrap();
    assert!(matches!(cfg.scenario_set(&sys.state_labels), Err(Error::Config(_))));
    let cfg = RunConfig::from_json(r#"{"system":{"grid_file":"missing.json"}}"#).unwrap();
    assert!(matches!(cfg.system(Path::new("/nonexistent")), Err(Error::Config(_))));
}

#[test]
fn inline_matrix_and_row_channels() {
    let cfg = RunConfig::from_json(
        r#"{"system":{"matrix":{"a":[[0,1],[-2,-0.5]]}},
            "channels":[{"row":[1,0],"rho":0.9,"sigma":0.01}],
            "observer":{"tau":0.3,"poles":{"common":[-2,-3]}}}"#,
    )
    .unwrap();
    let sys = cfg.system(Path::new(".")).unwrap();
    assert_eq!(sys.state_labels, ["x1", "x2"]);
    let set = cfg.scenario_set(&sys.state_labels).unwrap();
    assert_eq!(set.len(), 2);
}
