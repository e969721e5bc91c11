//! Runs every criterion in-process, then the `horolab` binary on the same
//! configuration, and requires the two artifact trees to be byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use horolab::config::LoadedConfig;
use horolab::suite::verify_all;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).expect("artifact dir") {
        let p = e.expect("entry").path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        out.insert(name, std::fs::read(&p).expect("artifact"));
    }
    out
}

fn main() {
    let config = root().join("default.toml");
    let loaded = LoadedConfig::load(&config).expect("default.toml");
    let scratch = tempfile::tempdir().expect("tempdir");
    let run_a = scratch.path().join("a");
    let run_b = scratch.path().join("b");

    let mut failures = Vec::new();
    let ids: Vec<u32> = (1..=15).collect();
    let (report, _) = verify_all(&loaded, &run_a, &ids, |r| println!("{}", r.line())).expect("verify-all");
    for r in &report.criteria {
        if !r.ok() {
            failures.push(r.id);
        }
    }

    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_horolab"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&run_b)
        .arg("verify-all")
        .output()
        .expect("run horolab");
    let (a, b) = (tree(&run_a), tree(&run_b));
    let differing: Vec<&String> = a.keys().chain(b.keys()).filter(|k| a.get(*k) != b.get(*k)).collect();
    let identical = status.status.success() && !a.is_empty() && differing.is_empty();
    println!(
        "criterion 16 {:<28} {} ({:.2}s) {} artifacts, differing: {:?}",
        "reproducible artifacts",
        if identical { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        a.len(),
        differing
    );
    if !identical {
        failures.push(16);
    }

    if !failures.is_empty() {
        eprintln!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
    println!("acceptance: 16 criteria passed");
}
