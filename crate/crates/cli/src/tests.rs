use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::Value;

use super::{run, Cli};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn config(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn invoke(args: &[&str]) -> Value {
    let cli = Cli::try_parse_from(std::iter::once("fuzzfix").chain(args.iter().copied())).unwrap();
    serde_json::from_str(&run(&cli).to_json()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn exit_code(v: &Value) -> i64 {
    v["exit_code"].as_i64().unwrap()
}

#[test]
fn empty_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "empty.toml", "");
    let v = invoke(&["axioms", "--config", &p]);
    assert_eq!(exit_code(&v), 2);
    assert_eq!(v["status"], "error");
    assert_eq!(v["error"]["kind"], "config");
    assert!(v["error"]["message"]
        .as_str()
        .unwrap()
        .contains("missing section [carrier]"));
}

#[test]
fn dangling_operator_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        "[carrier]\ngrid = 11\n[maps]\nA = \"x +\"\nB = \"x\"\nF = \"x\"\nG = \"x\"\n[metric]\n";
    let p = write(dir.path(), "bad.toml", text);
    let v = invoke(&["fixpoint", "--config", &p]);
    assert_eq!(exit_code(&v), 2);
    let e = &v["error"];
    assert_eq!(e["offset"], 3);
    assert_eq!(e["location"]["line"], 4);
    assert!(e["expected"]
        .as_array()
        .unwrap()
        .iter()
        .any(|t| t == "number"));
}

#[test]
fn out_of_range_k_exits_2() {
    let text = std::fs::read_to_string(configs().join("example6.toml"))
        .unwrap()
        .replace("k = 0.5", "k = 1.5");
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "k.toml", &text);
    let v = invoke(&["verify", "--config", &p]);
    assert_eq!(exit_code(&v), 2);
    assert!(v["error"]["message"]
        .as_str()
        .unwrap()
        .contains("0 < k < 1"));
}

#[test]
fn standard_metric_axioms_pass() {
    let v = invoke(&["axioms", "--config", &config("standard_metric.toml")]);
    assert_eq!(exit_code(&v), 0, "{v}");
    assert_eq!(v["result"]["sampling"]["triples"], 1000);
    assert_eq!(v["result"]["sampling"]["seed"], 0);
}

#[test]
fn constant_membership_is_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "half.toml",
        "[carrier]\ngrid = 11\n[metric]\nmembership = \"0.5\"\nsamples = 0\n",
    );
    let v = invoke(&["axioms", "--config", &p]);
    assert_eq!(exit_code(&v), 1);
    assert_eq!(v["status"], "violation");
}

#[test]
fn usage_errors() {
    let v = invoke(&["verify"]);
    assert_eq!(exit_code(&v), 2);
    assert_eq!(v["error"]["kind"], "usage");
    let v = invoke(&[
        "psi-check",
        "--config",
        &config("example6.toml"),
        "--tol",
        "1e-3",
    ]);
    assert_eq!(v["error"]["kind"], "usage");
    let v = invoke(&[
        "fixpoint",
        "--config",
        &config("example6.toml"),
        "--t-grid",
        "1,2",
    ]);
    assert_eq!(v["error"]["kind"], "usage");
    let v = invoke(&["reproduce-example6", "--config", &config("example6.toml")]);
    assert_eq!(v["error"]["kind"], "usage");
    assert!(Cli::try_parse_from(["fuzzfix", "axioms", "--t-grid", "1,-2"]).is_err());
}

#[test]
fn flags_override_the_file() {
    let cfg = config("example6.toml");
    let v = invoke(&["fixpoint", "--config", &cfg]);
    assert_eq!(v["result"]["grid_n"], 101);
    assert_eq!(v["result"]["tol"], 1e-9);
    let v = invoke(&[
        "fixpoint", "--config", &cfg, "--grid", "21", "--tol", "1e-6",
    ]);
    assert_eq!(v["result"]["grid_n"], 21);
    assert_eq!(v["result"]["tol"], 1e-6);
    assert_eq!(v["settings"]["grid"], 21);

    let v = invoke(&[
        "axioms",
        "--config",
        &config("standard_metric.toml"),
        "--t-grid",
        "0.5, 3",
        "--seed",
        "9",
    ]);
    assert_eq!(
        v["result"]["sampling"]["t_grid"],
        serde_json::json!([0.5, 3.0])
    );
    assert_eq!(v["result"]["sampling"]["seed"], 9);

    let v = invoke(&["verify", "--config", &cfg, "--grid", "11"]);
    assert_eq!(v["result"]["report"]["scan"]["grid_n"], 11);
}

#[test]
fn dp_solve_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    let csv_arg = csv.display().to_string();
    let v = invoke(&[
        "dp-solve",
        "--config",
        &config("dp_linear.toml"),
        "--csv",
        &csv_arg,
    ]);
    assert_eq!(exit_code(&v), 0, "{v}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,U1,U2,V1,V2"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 201);
    for r in &rows {
        assert_eq!(r.len(), 5);
        for p in &r[1..] {
            assert!((p - 2.0 * r[0]).abs() < 1e-6, "{r:?}");
        }
    }
}

#[test]
fn csv_write_failure_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir
        .path()
        .join("missing")
        .join("p.csv")
        .display()
        .to_string();
    let v = invoke(&[
        "dp-solve",
        "--config",
        &config("dp_linear.toml"),
        "--csv",
        &bad,
    ]);
    assert_eq!(exit_code(&v), 2);
    assert_eq!(v["error"]["kind"], "io");
}

#[test]
fn every_report_matches_the_schema() {
    let schema: Value = serde_json::from_str(include_str!("../schema/report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.toml", "");
    let (standard, example6, dp) = (
        config("standard_metric.toml"),
        config("example6.toml"),
        config("dp_linear.toml"),
    );
    let strict = std::fs::read_to_string(&example6)
        .unwrap()
        .replace("[psi]\n", "[psi]\nvariant = \"strict\"\n");
    let strict = write(dir.path(), "strict.toml", &strict);
    let runs: Vec<Vec<&str>> = vec![
        vec!["axioms", "--config", &standard],
        vec!["psi-check", "--config", &example6],
        vec!["psi-check", "--config", &strict],
        vec!["verify", "--config", &example6],
        vec!["pairs", "--config", &example6],
        vec!["fixpoint", "--config", &example6],
        vec!["theorem", "--config", &example6],
        vec!["dp-solve", "--config", &dp],
        vec!["reproduce-example6"],
        vec!["axioms", "--config", &empty],
        vec!["verify"],
    ];
    let mut statuses = Vec::new();
    for args in runs {
        let v = invoke(&args);
        let errors: Vec<String> = validator
            .iter_errors(&v)
            .map(|e| format!("{} at {}", e, e.instance_path()))
            .collect();
        assert!(errors.is_empty(), "{args:?}: {errors:#?}");
        statuses.push(v["status"].as_str().unwrap().to_string());
    }
    for s in ["pass", "violation", "error"] {
        assert!(
            statuses.iter().any(|t| t == s),
            "no {s} report was validated"
        );
    }

    // the schema ties the exit code to the status
    let mut v = invoke(&["fixpoint", "--config", &example6]);
    v["exit_code"] = 1.into();
    assert!(!validator.is_valid(&v));
}

#[test]
fn membership_expression_is_zero_at_t_zero() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[carrier]\ngrid = 11\n[metric]\nmembership = \"t/(t + abs(x - y))\"\nsamples = 0\n";
    let p = write(dir.path(), "m.toml", text);
    let v = invoke(&["axioms", "--config", &p]);
    assert_eq!(exit_code(&v), 0, "{v}");
}
