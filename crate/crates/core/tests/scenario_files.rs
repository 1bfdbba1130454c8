use std::fs;
use std::path::PathBuf;

use qpmix::config::{parse_config, Scenario};

#[test]
fn shipped_scenarios_parse_and_round_trip() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut seen = Vec::new();
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        let spec = parse_config(&fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(parse_config(&spec.to_toml().unwrap()).unwrap(), spec);
        seen.push(spec.scenario);
    }
    for s in [
        Scenario::Saturated,
        Scenario::Unsaturated,
        Scenario::Voip,
        Scenario::MixedRoster,
        Scenario::Coexistence,
        Scenario::IndependentLearning,
        Scenario::Convlab,
    ] {
        assert!(seen.contains(&s), "no file for {}", s.name());
    }
}
