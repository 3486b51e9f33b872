//! End-to-end runs of the `vibound` binary: exit codes, output files and
//! schema conformance.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vibound"));
    c.env_remove("VIBOUND_THREADS");
    c
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn vibound")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn assert_schema_valid(name: &str, path: &Path) {
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(root().join("schemas").join(format!("{name}.schema.json"))).unwrap())
            .unwrap();
    let instance: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{} violates {name}: {errors:?}", path.display());
    assert_eq!(instance["schema"], name);
}

fn oracle_value(args: &[&str]) -> f64 {
    let o = run(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o).trim().parse().unwrap()
}

#[test]
fn oracle_examples() {
    let w = oracle_value(&["oracle", "w1d", "normal", "0", "1", "normal", "1", "1", "--p", "2"]);
    assert!((w - 1.0).abs() < 1e-8, "{w}");
    // KL(Weibull(k/2)‖Weibull(k)) and the reverse direction, both free of k.
    let kl = oracle_value(&["oracle", "divergence", "kl", "weibull", "0.05", "weibull", "0.1"]);
    assert!((kl - 0.88407).abs() < 1e-4, "{kl}");
    let rev = oracle_value(&["oracle", "divergence", "kl", "weibull", "0.1", "weibull", "0.05"]);
    assert!((rev - 0.29077).abs() < 1e-4, "{rev}");
    let same = oracle_value(&["oracle", "divergence", "kl", "t", "0", "2", "5", "t", "0", "2", "5"]);
    assert!(same.abs() < 1e-10, "{same}");
    let d2 = oracle_value(&["oracle", "divergence", "renyi", "2", "weibull", "1", "weibull", "0.5"]);
    assert!(d2 > 0.39 && d2 < 0.391, "{d2}");
    // W₂ between N(0, I) and N((1, 0), diag(4, 1)) is sqrt(1 + 1).
    let wg = oracle_value(&["oracle", "wgauss", "--mean1", "0,0", "--cov1", "1,0,0,1", "--mean2", "1,0", "--cov2", "4,0,0,1"]);
    assert!((wg - 2f64.sqrt()).abs() < 1e-8, "{wg}");
    let neg = oracle_value(&["oracle", "w1d", "normal", "-3", "1", "normal", "0", "1", "--p", "1"]);
    assert!((neg - 3.0).abs() < 1e-8, "{neg}");
}

#[test]
fn usage_errors_exit_2() {
    let cases: [&[&str]; 7] = [
        &["fit", "--model", "conjugate", "--objective", "klvi", "--bogus", "--out", "x.json"],
        &["fit", "--model", "ten-schools", "--objective", "klvi", "--out", "x.json"],
        &["fit", "--model", "conjugate", "--objective", "klvi", "--family", "mean-field-cauchy", "--out", "x.json"],
        &["fit", "--model", "conjugate", "--objective", "klvi", "--family", "full-rank-gaussian", "--df", "5", "--out", "x.json"],
        &["oracle", "w1d", "normal", "0", "-1", "normal", "0", "1"],
        &["oracle", "divergence", "kl", "weibull", "1", "2", "3", "normal", "0", "1"],
        &["oracle", "divergence", "hellinger", "normal", "0", "1", "normal", "0", "1"],
    ];
    for args in cases {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty(), "{args:?} printed no diagnostic");
    }
}

#[test]
fn fit_writes_result_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    let o = run(&[
        "fit", "--model", "conjugate", "--objective", "klvi", "--family", "full-rank-gaussian", "--iterations", "150",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_schema_valid("fit-result", &out);
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(json["generated_at"].is_string());
    let iterations = json["data"]["fit"]["iterations"].as_u64().unwrap() as usize;
    let trace = std::fs::read_to_string(dir.path().join("fit.trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iteration,smoothed_objective"));
    assert_eq!(lines.count(), iterations);
    assert!(!trace.contains('\r'));
}

#[test]
fn chivi_fit_records_warm_start() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chivi.json");
    let o = run(&[
        "fit", "--model", "conjugate", "--objective", "chivi", "--iterations", "100", "--no-timestamp", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_schema_valid("fit-result", &out);
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(json.get("generated_at").is_none());
    assert_eq!(json["data"]["fit"]["objective"]["type"], "cubo");
    assert!(json["data"]["warm_start"]["klvi_fit"].is_object());
}

fn workflow(model: &str, config: &str) -> (Option<i32>, PathBuf, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("wf.json");
    let cfg = root().join("fixtures/workflow").join(config);
    let o = run(&["workflow", "--model", model, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(stdout(&o).contains("decision"), "{}", String::from_utf8_lossy(&o.stderr));
    (o.status.code(), out, dir)
}

#[test]
fn workflow_exit_codes_encode_decisions() {
    for (model, config, code) in [
        ("conjugate", "conjugate.json", 0),
        ("eight-schools-noncentered", "eight-schools.json", 10),
        ("eight-schools-centered", "eight-schools.json", 20),
    ] {
        let (got, out, _dir) = workflow(model, config);
        assert_eq!(got, Some(code), "{model}");
        assert_schema_valid("workflow-report", &out);
        let text = std::fs::read_to_string(out.with_extension("txt")).unwrap();
        assert!(text.lines().any(|l| l.starts_with("exit code") && l.ends_with(&code.to_string())), "{text}");
    }
}

#[test]
fn case_study_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"klvi":{"iterations":600},"chivi":{"iterations":600},"diagnostics":{"t_diag":5000,"t_moments":5000}}"#)
        .unwrap();
    let out = dir.path().join("bundle");
    let o = run(&[
        "case-study", "robust-regression", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2",
    ]);
    assert!(matches!(o.status.code(), Some(0 | 30)), "{}", String::from_utf8_lossy(&o.stderr));
    assert_schema_valid("case-study-report", &out.join("report.json"));
    let table = std::fs::read_to_string(out.join("table.csv")).unwrap();
    assert!(table.starts_with("metric,"));
    let marginals = std::fs::read_to_string(out.join("marginals.csv")).unwrap();
    assert!(marginals.starts_with("column,coordinate,x,density\n"));
    assert!(std::fs::read_to_string(out.join("table.txt")).unwrap().contains("ground-truth scale"));
}

#[test]
fn bad_thread_env_is_a_usage_error() {
    let o = bin()
        .args(["oracle", "w1d", "normal", "0", "1", "normal", "1", "1"])
        .env("VIBOUND_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreadable_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "workflow", "--model", "conjugate", "--config", "/nonexistent/cfg.json", "--out",
        dir.path().join("w.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
