use std::collections::BTreeSet;

use snipesim::harness::{
    builtin, emit_report, list_scenarios, load_scenario, parse_scenario, run_scenario, Report,
    ReportError, ScenarioError,
};

#[test]
fn builtins_are_listed_once_and_load() {
    let names = list_scenarios();
    let unique: BTreeSet<_> = names.iter().collect();
    assert_eq!(unique.len(), names.len());
    for want in [
        "round1",
        "round2",
        "round3",
        "mitigation-tiered",
        "mitigation-bump",
        "mitigation-feelock",
    ] {
        assert!(names.contains(&want), "{want} missing");
    }
    for n in names {
        assert_eq!(builtin(n).unwrap().name, n);
    }
}

#[test]
fn every_builtin_passes() {
    for n in list_scenarios() {
        let r = run_scenario(builtin(n).unwrap()).unwrap();
        let failed: Vec<_> = r.expectations.iter().filter(|e| !e.passed).collect();
        assert!(r.passed, "{n}: {failed:?} {:?}", r.indexer);
    }
}

#[test]
fn round1_text_names_the_winner() {
    let r = run_scenario(builtin("round1").unwrap()).unwrap();
    let text = emit_report(&r, "text").unwrap();
    assert!(text.contains("winner tx fee_sats=28125000"), "{text}");
    assert!(text.trim_end().ends_with("result PASS"));
}

#[test]
fn json_and_text_carry_the_same_numbers() {
    let r = run_scenario(builtin("round1").unwrap()).unwrap();
    let text = emit_report(&r, "text").unwrap();
    let back = Report::from_json(&emit_report(&r, "json").unwrap()).unwrap();
    assert_eq!(back, r);
    for row in &back.fee_table {
        assert!(
            text.lines()
                .any(|l| l.contains(&row.label) && l.contains(&row.fee_sats.to_string())),
            "{} missing from text",
            row.label
        );
    }
    for b in &back.blocks {
        for t in &b.txs {
            assert!(text.contains(&format!(
                "fee_sats={} fee_rate={} label={}",
                t.fee_sats, t.fee_rate, t.label
            )));
        }
    }
}

#[test]
fn unknown_format_is_rejected() {
    let r = run_scenario(builtin("round1").unwrap()).unwrap();
    assert!(matches!(
        emit_report(&r, "xml"),
        Err(ReportError::UnsupportedFormat(_))
    ));
}

#[test]
fn json_is_byte_identical_across_runs() {
    for n in list_scenarios() {
        let a = run_scenario(builtin(n).unwrap()).unwrap().to_json();
        let b = run_scenario(builtin(n).unwrap()).unwrap().to_json();
        assert_eq!(a, b, "{n}");
    }
}

#[test]
fn seed_changes_keys_not_outcome() {
    let mut s = builtin("round1").unwrap();
    let base = run_scenario(s.clone()).unwrap();
    s.seed = 99;
    let other = run_scenario(s).unwrap();
    assert_ne!(base.wallets, other.wallets);
    assert!(other.passed);
}

const BROKEN: &str = r#"
name = "broken"
description = "buys from a sale nobody listed"
seed = 3
wallets = ["buyer"]

[[genesis]]
wallet = "buyer"
amount = 1_000_000

[[actions]]
action = "mine"
miner = "buyer"

[[actions]]
action = "buy"
wallet = "buyer"
sale = "nope"
change = 0
"#;

#[test]
fn failing_step_is_named() {
    let s = parse_scenario(BROKEN).unwrap();
    match run_scenario(s) {
        Err(ScenarioError::Step { step, action, .. }) => {
            assert_eq!(step, 2);
            assert_eq!(action, "buy");
        }
        other => panic!("expected a step error, got {other:?}"),
    }
}

#[test]
fn bad_toml_and_unknown_names() {
    assert!(matches!(
        parse_scenario("name = "),
        Err(ScenarioError::Parse(_))
    ));
    assert!(load_scenario("no-such-scenario").is_err());
}

#[test]
fn scenario_file_loads_by_path() {
    let dir = std::env::temp_dir().join(format!("snipesim-harness-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("broken.toml");
    std::fs::write(&path, BROKEN).unwrap();
    let s = load_scenario(path.to_str().unwrap()).unwrap();
    assert_eq!(s.name, "broken");
    std::fs::remove_dir_all(&dir).unwrap();
}
