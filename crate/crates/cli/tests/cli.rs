use std::path::Path;
use std::process::Command;

fn specdim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specdim"))
}

#[test]
fn writes_csv_and_json_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"command": "subordinacy", "params": {"potential": {"kind": "random", "amplitude": 1.0}, "gauge": {"name": "power", "params": {"alpha": 0.5}}, "l_schedule": {"geomspace": [10, 10000, 12]}}, "seed": 9}"#,
    )
    .unwrap();
    let run = |out: &Path| {
        let s = specdim().arg("subordinacy").arg("--config").arg(&cfg).arg("--out").arg(out).status().unwrap();
        assert!(s.success());
        (std::fs::read(out.join("subordinacy.csv")).unwrap(), std::fs::read(out.join("subordinacy.json")).unwrap())
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a, b);
    assert!(String::from_utf8(a.0).unwrap().starts_with("# "));
}

#[test]
fn inline_params_print_to_stdout() {
    let out = specdim()
        .args(["rank-one", "--params", r#"{"measure": {"atoms": [[-1, 0.5], [1, 0.5]]}, "lambda": 1.0}"#])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().nth(1), Some("x,weight"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn bad_gauge_exits_with_field_path() {
    let out = specdim()
        .args(["gauge-compare", "--params", r#"{"rho": {"name": "powr"}, "xi": {"name": "power", "params": {"alpha": 1}}}"#])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("`rho.name`"), "{err}");
}

#[test]
fn mismatched_command_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"command": "boole", "params": {"measure": {"atoms": [[0, 1]]}}}"#).unwrap();
    let out = specdim().arg("lyapunov").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
