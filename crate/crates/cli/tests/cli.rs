use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn cms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cms"))
        .args(args)
        .output()
        .expect("cms runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cms-cli-test-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn record<'a>(report: &'a Value, quantity: &str) -> &'a Value {
    report["records"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["quantity"] == quantity)
        .unwrap_or_else(|| panic!("no record `{quantity}`"))
}

#[test]
fn rate_report_has_the_record_fields() {
    let out = cms(&["rate", "--preset", "example3", "--samples", "20000", "--seed", "7"]);
    assert!(out.status.success());
    let r = json(&out);
    assert_eq!(r["command"], "rate");
    assert_eq!(r["seed"], 7);
    assert_eq!(r["params"]["pairs"], 20000);
    let rec = record(&r, "empirical_rate");
    for field in ["quantity", "estimate", "stderr", "n_samples", "seed", "params"] {
        assert!(rec.get(field).is_some(), "missing {field}");
    }
    let rate = rec["estimate"].as_f64().unwrap();
    assert!(rate > 0.93 && rate <= 0.9375 + 1e-12, "{rate}");
    assert!(r["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
}

#[test]
fn entropy_of_decimal_uniform_is_log_ten() {
    let out = cms(&["entropy", "--preset", "decimal-uniform", "--particles", "2000"]);
    assert!(out.status.success());
    let h = record(&json(&out), "entropy_formula")["estimate"].as_f64().unwrap();
    assert!((h - 10f64.ln()).abs() < 1e-12);
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let args = ["energy", "--preset", "decimal-weighted", "--samples", "5000", "--particles", "5000", "--seed", "3"];
    let a = cms(&args);
    let b = cms(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = cms(&["energy", "--preset", "decimal-weighted", "--samples", "5000", "--particles", "5000", "--seed", "4"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn out_directory_receives_json_and_csv() {
    let dir = scratch_dir("out");
    let d = dir.to_str().unwrap();
    let out = cms(&["blocks", "--preset", "decimal-uniform", "--max-len", "2", "--samples", "20000", "--particles", "1000", "--out", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let written = std::fs::read(dir.join("blocks.json")).unwrap();
    assert_eq!(written, out.stdout);
    let csv = std::fs::read_to_string(dir.join("blocks.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("k,h_k,"));

    let out = cms(&["invariant", "--preset", "decimal-uniform", "--samples", "500", "--out", d]);
    assert!(out.status.success());
    let ens = std::fs::read_to_string(dir.join("invariant.csv")).unwrap();
    assert_eq!(ens.lines().count(), 501);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = scratch_dir("config");
    let base = r#"schema = 1
dimension = 1

[[vertex]]
id = "A"
region = "true"
bbox = [[0.0, 1.0]]
anchor = [0.0]

[[edge]]
id = "e"
from = "A"
to = "TO"
map = ["MAP"]
prob = "1"
"#;
    let cases = [
        ("dangling", base.replace("TO", "Z").replace("MAP", "x1/2"), "`Z`"),
        ("expression", base.replace("TO", "A").replace("MAP", "x1/(2"), "14:"),
        ("schema", base.replace("TO", "A").replace("MAP", "x1/2").replace("dimension = 1", "dimension = -1"), "dimension"),
    ];
    for (name, text, needle) in cases {
        let path = dir.join(format!("{name}.toml"));
        std::fs::write(&path, text).unwrap();
        let out = cms(&["validate", "--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(needle), "{name}: {stderr}");
        let doc = json(&out);
        assert_eq!(doc["error"]["kind"], "config");
    }
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn runtime_errors_exit_with_one() {
    // the oracle needs constant probabilities
    let out = cms(&["oracle", "--preset", "decimal-weighted", "--samples", "10", "--particles", "10"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"]["kind"], "runtime");
}

#[test]
fn failing_validation_exits_with_two() {
    let dir = scratch_dir("invalid");
    // probabilities sum to 1.2
    let text = r#"schema = 1
dimension = 1

[[vertex]]
id = "A"
region = "x1 >= 0 and x1 <= 1"
bbox = [[0.0, 1.0]]
anchor = [0.0]

[[edge]]
id = "a"
from = "A"
to = "A"
map = ["x1/2"]
prob = "0.6"

[[edge]]
id = "b"
from = "A"
to = "A"
map = ["x1/2 + 1/2"]
prob = "0.6"
"#;
    let path = dir.join("sum.toml");
    std::fs::write(&path, text).unwrap();
    let out = cms(&["validate", "--config", path.to_str().unwrap(), "--samples", "100"]);
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(cms(&["rate"]).status.code(), Some(2));
    assert_eq!(cms(&["rate", "--preset", "nope"]).status.code(), Some(2));
}

#[test]
fn cylinder_methods_agree_on_decimal_uniform() {
    for method in ["quadrature", "exact"] {
        let out = cms(&["cylinder", "--preset", "decimal-uniform", "--word", "3,1,4", "--method", method, "--particles", "100"]);
        assert!(out.status.success());
        let m = record(&json(&out), "cylinder_measure")["estimate"].as_f64().unwrap();
        assert!((m - 1e-3).abs() < 1e-15, "{method}: {m}");
    }
}

#[test]
fn gap_reports_the_largest_competitor() {
    let out = cms(&["gap", "--preset", "decimal-weighted", "--competitors", "3", "--samples", "3000", "--seed", "1"]);
    assert!(out.status.success());
    let r = json(&out);
    let gaps: Vec<f64> = r["records"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|x| x["quantity"] == "variational_gap")
        .map(|x| x["estimate"].as_f64().unwrap())
        .collect();
    assert_eq!(gaps.len(), 3);
    let i = r["details"]["max_gap_index"].as_u64().unwrap() as usize;
    assert!(gaps.iter().all(|&g| g <= gaps[i]));
}
