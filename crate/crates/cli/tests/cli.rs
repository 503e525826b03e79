use std::process::{Command, Output};

fn snipesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snipesim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn list_prints_builtins() {
    let o = snipesim(&["list"]);
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert!(names.contains(&"round1".to_string()));
    assert!(names.contains(&"mitigation-feelock".to_string()));
}

#[test]
fn round1_passes_and_names_the_winner() {
    let o = snipesim(&["run", "--scenario", "round1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("winner tx fee_sats=28125000"), "{text}");
    assert!(text.trim_end().ends_with("result PASS"));
}

#[test]
fn json_out_round_trips_through_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r1.json");
    let p = path.to_str().unwrap();
    let o = snipesim(&[
        "run",
        "--scenario",
        "round1",
        "--format",
        "json",
        "--out",
        p,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let saved = std::fs::read_to_string(&path).unwrap();
    assert_eq!(stdout(&o).trim_end(), saved.trim_end());

    let direct = snipesim(&["run", "--scenario", "round1"]);
    let again = snipesim(&["report", "--in", p]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(stdout(&again), stdout(&direct));
}

#[test]
fn overrides_show_in_the_report() {
    let o = snipesim(&[
        "run",
        "--scenario",
        "round1",
        "--policy",
        "rbf",
        "--seed",
        "9",
        "--fee-lock",
    ]);
    let text = stdout(&o);
    let head = text.lines().next().unwrap();
    assert!(head.contains("seed=9"), "{head}");
    assert!(head.contains("policy=rbf"), "{head}");
    assert!(head.contains("fee_lock=true"), "{head}");
}

#[test]
fn usage_and_load_errors_exit_2() {
    assert_eq!(
        snipesim(&["run", "--scenario", "round1", "--format", "xml"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        snipesim(&["run", "--scenario", "no-such-thing"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        snipesim(&["report", "--in", "/nonexistent/r.json"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn failed_expectation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wrong.toml");
    std::fs::write(
        &path,
        r#"
name = "wrong"
description = "expects a balance nobody has"
seed = 4
wallets = ["alice"]

[[genesis]]
wallet = "alice"
amount = 100_000

[[actions]]
action = "mine"
miner = "alice"

[[expect]]
kind = "token-balance"
wallet = "alice"
tick = "ak47"
balance = 5
"#,
    )
    .unwrap();
    let o = snipesim(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).trim_end().ends_with("result FAIL"));
}
