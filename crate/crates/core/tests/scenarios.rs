mod common;

use byzcone::queries::{run_queries, Options};

use common::{load, NAMES};

#[test]
fn every_declared_query_passes() {
    for name in NAMES {
        let sc = load(name);
        let out = run_queries(&sc, Options::default()).unwrap();
        assert!(!out.results.is_empty(), "{name} declares no queries");
        for r in &out.results {
            assert_ne!(r.passed, Some(false), "{name}/{}:\n{}", r.name, r.report);
        }
    }
}

#[test]
fn overrides_apply() {
    use byzcone::scenario::{load_scenario_with, Overrides};
    let path = common::scenario_dir().join("relay.toml");
    let overrides = Overrides {
        horizon: Some(2),
        seed: Some(3),
        budget: Some(5),
    };
    let sc = load_scenario_with(&path, overrides).unwrap_err();
    assert!(sc.to_string().contains("beyond the horizon"), "{sc}");
    let path = common::scenario_dir().join("ghost.toml");
    let sc = load_scenario_with(&path, Overrides { horizon: Some(2), ..overrides }).unwrap();
    assert_eq!(sc.ctx.sig.horizon(), 2);
    assert_eq!(sc.universe.budget, 5);
    assert_eq!(sc.seed, 3);
    assert!(sc.scripts.iter().all(|s| s.script.rounds.len() <= 2));
}
