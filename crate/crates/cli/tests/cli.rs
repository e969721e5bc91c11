use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn horolab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horolab")).arg("--out").arg(out).args(args).output().expect("spawn horolab")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn error_kind(o: &Output) -> String {
    let v: Value = serde_json::from_slice(&o.stderr).expect("stderr is JSON");
    v["kind"].as_str().unwrap().to_string()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn bruhat_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = horolab(dir.path(), &["bruhat", "--matrix", "[[1,1],[1,2]]"]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    assert_eq!((num(&v["n"]), num(&v["t"]), num(&v["u"])), (1.0, 0.0, 1.0));

    let art: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bruhat.json")).unwrap()).unwrap();
    assert_eq!(art["command"], "bruhat");
    assert_eq!(art["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(art["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(art["result"], v);
}

#[test]
fn zset_example_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let g = data("toy.json");
    let o =
        horolab(dir.path(), &["zset", "--graph", g.to_str().unwrap(), "--from", "v", "--to", "v", "--budget", "3.2"]);
    assert!(o.status.success());
    let got: Vec<f64> = stdout_json(&o)["values"].as_array().unwrap().iter().map(|e| num(&e["slack"])).collect();
    assert_eq!(got, [0.0, 1.0, 1.5, 2.0, 2.5, 3.0]);
    let csv = std::fs::read_to_string(dir.path().join("zset.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("slack,path_length"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn ray_graph_reports_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let g = data("ray.json");
    let o = horolab(dir.path(), &["zset", "--graph", g.to_str().unwrap(), "--from", "x", "--to", "x", "--budget", "5"]);
    let v = stdout_json(&o);
    assert_eq!(num(&v["ray_start"]), 1.6);
    assert_eq!(v["values"].as_array().unwrap().len(), 3);
}

#[test]
fn twist_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = horolab(
        dir.path(),
        &["twist", "--m1", "[[2,1],[1,1]]", "--m2", "[[1,1],[1,2]]", "--step", "1.5", "--k-max", "6"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("twist.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("k,slack,residual"));
    assert_eq!(csv.lines().count(), 8);
}

#[test]
fn mcshane_example() {
    let dir = tempfile::tempdir().unwrap();
    let (d, q) = (data("domain.json"), data("queries.json"));
    let o = horolab(dir.path(), &["mcshane", "--domain", d.to_str().unwrap(), "--queries", q.to_str().unwrap()]);
    assert!(o.status.success());
    let vals: Vec<f64> = stdout_json(&o)["values"].as_array().unwrap().iter().map(num).collect();
    // min over the domain of f(p) + |p - q|
    assert_eq!(vals[0], 0.5);
    assert!((vals[1] - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn chainprox_probes_of_a_rotation_are_singletons() {
    let dir = tempfile::tempdir().unwrap();
    let o = horolab(
        dir.path(),
        &[
            "chainprox",
            "--model",
            "rotation",
            "--alpha",
            "0.4142",
            "--n",
            "200",
            "--classify",
            "--eps",
            "0.05",
            "--probes",
            "8",
        ],
    );
    assert!(o.status.success());
    assert_eq!(num(&stdout_json(&o)["class_count"]), 8.0);
    assert!(dir.path().join("chainprox.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    let o = horolab(p, &["bruhat", "--matrix", "[[0,1],[-1,0]]"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "validation");

    let bad = p.join("bad.json");
    std::fs::write(&bad, "{\"vertices\": []").unwrap();
    let o = horolab(p, &["zset", "--graph", bad.to_str().unwrap(), "--from", "v", "--to", "v"]);
    assert_eq!(o.status.code(), Some(2));

    let toy = data("toy.json");
    let o = horolab(p, &["zset", "--graph", toy.to_str().unwrap(), "--from", "v", "--to", "v", "--budget", "1e9"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_kind(&o), "budget");

    let neg = p.join("neg.json");
    std::fs::write(&neg, r#"{"vertices":[{"id":"v","flag":"imc"}],"edges":[{"src":"v","dst":"v","slack":-0.5}]}"#)
        .unwrap();
    let o = horolab(p, &["zset", "--graph", neg.to_str().unwrap(), "--from", "v", "--to", "v"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_kind(&o), "configuration");

    let dom = p.join("dom.json");
    std::fs::write(&dom, r#"{"points":[[0,0],[1,0]],"values":[0,3]}"#).unwrap();
    let q = data("queries.json");
    let o = horolab(p, &["mcshane", "--domain", dom.to_str().unwrap(), "--queries", q.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));

    // randomized harnesses refuse to run without a seed
    let o = horolab(p, &["verify-all", "--only", "1"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = horolab(dir.path(), &["--seed", "7", "verify-all", "--only", "1,10"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("criterion-01-bruhat-round-trip.json").exists());
    assert!(dir.path().join("summary.json").exists());
}
