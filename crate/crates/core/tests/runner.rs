use serde_json::json;
use specdim::runner::{self, Command, RunConfig};
use specdim::Error;

fn field_of(e: Error) -> String {
    match e {
        Error::ConfigInvalid { field, .. } => field,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn unknown_gauge_names_its_field() {
    let cfg = RunConfig::new(Command::GaugeCompare, json!({ "rho": { "name": "powr" }, "xi": { "name": "power", "params": { "alpha": 1.0 } } }), 0);
    assert_eq!(field_of(runner::run(&cfg).unwrap_err()), "rho.name");
    let cfg = RunConfig::new(Command::BorelScan, json!({ "measure": { "atoms": [[0.0, 1.0]] }, "gauge": { "name": "nope" }, "points": [0.0] }), 0);
    assert_eq!(field_of(runner::run(&cfg).unwrap_err()), "gauge.name");
}

#[test]
fn unknown_and_missing_keys_are_rejected() {
    let cfg = RunConfig::new(Command::Boole, json!({ "measure": { "atoms": [[0.0, 1.0]] }, "lambda": [10.0] }), 0);
    assert_eq!(field_of(runner::run(&cfg).unwrap_err()), "lambda");
    let cfg = RunConfig::new(Command::RankOne, json!({ "measure": { "atoms": [[0.0, 1.0]] } }), 0);
    assert_eq!(field_of(runner::run(&cfg).unwrap_err()), "lambda");
}

#[test]
fn full_config_round_trips_through_json() {
    let text = r#"{"command": "lyapunov", "params": {"potential": {"kind": "constant", "value": 0.0}, "n_max": 5000, "energies": [3.0]}, "seed": 4}"#;
    let cfg = RunConfig::from_json(text).unwrap();
    let out = runner::run(&cfg).unwrap();
    assert_eq!(out.csv_name(), "lyapunov.csv");
    let v: serde_json::Value = serde_json::from_str(&out.json).unwrap();
    assert_eq!(v["config"]["seed"], 4);
    assert!(out.csv.starts_with("# "));
    assert_eq!(out.csv.lines().count(), 3);
}

#[test]
fn seed_reaches_random_potentials() {
    let params = json!({ "potential": { "kind": "random", "amplitude": 2.0 }, "n_max": 5000, "energies": [0.5] });
    let a = runner::run(&RunConfig::new(Command::Lyapunov, params.clone(), 1)).unwrap();
    let b = runner::run(&RunConfig::new(Command::Lyapunov, params.clone(), 2)).unwrap();
    let c = runner::run(&RunConfig::new(Command::Lyapunov, params, 1)).unwrap();
    assert_ne!(a.csv, b.csv);
    assert_eq!(a.csv, c.csv);
}
