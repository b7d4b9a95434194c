use std::path::PathBuf;
use std::process::{Command, Output};

use membrane_integrals::scenario::{Scenario, Suite};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn membint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_membint"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn compute_prints_rational_and_decimal() {
    let o = membint(&["compute", scenario("two-thirds.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("value    = 2/3"), "{out}");
    assert!(out.contains("0.666666666666667"), "{out}");
}

#[test]
fn monte_carlo_compute_is_reproducible() {
    let file = scenario("two-thirds.json");
    let args = [
        "compute",
        file.to_str().unwrap(),
        "--engine",
        "montecarlo",
        "--seed",
        "42",
        "--mc-samples",
        "100000",
        "--report",
        "json",
    ];
    let a = membint(&args);
    let b = membint(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let re = v["re"].as_f64().unwrap();
    let err = v["error_estimate"].as_f64().unwrap();
    assert!((re - 2.0 / 3.0).abs() <= 3.0 * err, "{re} ± {err}");
    assert_eq!(v["metadata"]["seed"], 42);
}

#[test]
fn malformed_rho_is_a_validation_error() {
    let dir = std::env::temp_dir().join(format!("membint-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad-rho.json");
    let text = std::fs::read_to_string(scenario("two-thirds.json"))
        .unwrap()
        .replace(r#""rho": [[1, 2]]"#, r#""rho": [[2, 2]]"#);
    std::fs::write(&path, text).unwrap();
    let o = membint(&["compute", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("rho[0]"), "{err}");
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let o = membint(&["verify", "no-such-suite"]);
    assert_eq!(o.status.code(), Some(2));
    let o = membint(&["verify"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn injected_sign_flip_fails_the_run() {
    let o = membint(&[
        "verify",
        scenario("sign-flip.json").to_str().unwrap(),
        "--report",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["suite"], "sign-flip");
    let rec = &v["scenarios"][0];
    assert_eq!(rec["verdict"], "fail");
    for key in [
        "id",
        "check",
        "lhs",
        "rhs",
        "deviation",
        "tolerance",
        "verdict",
        "engine",
    ] {
        assert!(rec.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn exact_engine_on_non_polynomial_membrane_reports_errors() {
    let file = scenario("torus.json");
    let o = membint(&[
        "verify",
        file.to_str().unwrap(),
        "--engine",
        "exact",
        "--report",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let recs = v["scenarios"].as_array().unwrap();
    assert!(!recs.is_empty());
    assert!(recs.iter().all(|r| r["verdict"] == "error"));
    // with its own quadrature engine the same scenario passes
    let o = membint(&["verify", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let file = scenario("two-thirds.json");
    let a = membint(&["verify", file.to_str().unwrap(), "--report", "json"]);
    let b = membint(&["verify", file.to_str().unwrap(), "--report", "json"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn out_flag_writes_the_json_report() {
    let dir = std::env::temp_dir().join(format!("membint-out-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("report.json");
    let o = membint(&[
        "verify",
        scenario("volume-square.json").to_str().unwrap(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["suite"], "volume-square");
    assert!(stdout(&o).contains("volume-square: "));
}

#[test]
fn corpus_round_trips() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed = Scenario::parse(&text).unwrap();
        let normal = parsed.to_json();
        let again = Scenario::parse(&normal).unwrap();
        assert_eq!(parsed, again, "{}", path.display());
        assert_eq!(normal, again.to_json(), "{}", path.display());
        let raw: serde_json::Value = serde_json::from_str(&text).unwrap();
        let reserialized: serde_json::Value = serde_json::from_str(&normal).unwrap();
        for key in ["id", "n", "d", "membranes", "forms", "checks"] {
            assert_eq!(raw.get(key), reserialized.get(key), "{}: {key}", path.display());
        }
        count += 1;
    }
    assert!(count >= 10);
}

#[test]
fn suite_documents_accept_inline_scenarios() {
    let a = std::fs::read_to_string(scenario("two-thirds.json")).unwrap();
    let b = std::fs::read_to_string(scenario("volume-square.json")).unwrap();
    let doc = format!(r#"{{"suite": "pair", "scenarios": [{a}, {b}]}}"#);
    let suite = Suite::parse(&doc).unwrap();
    assert_eq!(suite.scenarios.len(), 2);
    let single = Suite::parse(&a).unwrap();
    assert_eq!(single.suite, "two-thirds");
}
