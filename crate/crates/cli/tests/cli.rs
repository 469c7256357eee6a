use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn csma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csma")).args(args).env_remove("CSMA_OUT_DIR").output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

const SMALL: &str = r#"{"version":1,"graph":{"preset":"path3"},"algorithm":"sched1",
  "arrivals":{"kind":"binomial","lambda":0.2},"epochs":25,"seed":40,"overrides":{"epoch_length_cap":20}}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn missing_config_exits_2() {
    let out = csma(&["run", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &SMALL.replace("\"seed\":40", "\"seed\":40,\"speed\":1"));
    let out = csma(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("speed"));
}

#[test]
fn numeric_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "boom.json",
        r#"{"version":1,"graph":{"preset":"single"},"algorithm":"sched1","mode":"deterministic-oracle",
            "arrivals":{"kind":"binomial","lambda":1.5},"epochs":100,"overrides":{"step_scale":5000,"epoch_length_cap":1}}"#,
    );
    let out = csma(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));
}

#[test]
fn seed_sweep_writes_one_stream_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out_dir = dir.path().join("sweep");
    let out = csma(&["run", &cfg, "--seeds", "4", "--seed", "100", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = stdout_json(&out);
    let seeds: Vec<u64> = manifest["seeds"].as_array().unwrap().iter().map(|s| s.as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![100, 101, 102, 103]);
    let on_disk: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk["config_hash"], manifest["config_hash"]);
    let mut bodies = Vec::new();
    for s in seeds {
        let body = fs::read_to_string(out_dir.join(format!("seed-{s}.jsonl"))).unwrap();
        assert_eq!(body.lines().count(), 25);
        let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join(format!("seed-{s}.summary.json"))).unwrap()).unwrap();
        assert_eq!(summary["seed"], s);
        bodies.push(body);
    }
    bodies.dedup();
    assert_eq!(bodies.len(), 4);
}

#[test]
fn same_seed_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    for sub in ["a", "b"] {
        let out = csma(&["run", &cfg, "--out", dir.path().join(sub).to_str().unwrap()]);
        assert!(out.status.success());
    }
    for file in ["seed-40.jsonl", "seed-40.summary.json"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn config_hash_ignores_key_order() {
    let dir = tempfile::tempdir().unwrap();
    let reordered = r#"{"seed":40,"overrides":{"epoch_length_cap":20},"epochs":25,
      "arrivals":{"lambda":0.2,"kind":"binomial"},"algorithm":"sched1","graph":{"preset":"path3"},"version":1}"#;
    let mut hashes = Vec::new();
    for (name, text) in [("a.json", SMALL), ("b.json", reordered)] {
        let cfg = write_config(dir.path(), name, text);
        let out = csma(&["run", &cfg, "--out", dir.path().join(name).with_extension("out").to_str().unwrap()]);
        hashes.push(stdout_json(&out)["config_hash"].as_str().unwrap().to_owned());
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_csma")).args(["run", &cfg]).env("CSMA_OUT_DIR", &target).output().unwrap();
    assert!(out.status.success());
    assert!(target.join("seed-40.jsonl").is_file());
    assert!(target.join("manifest.json").is_file());
}

#[test]
fn analyze_single_node_logit() {
    let out = csma(&["analyze", "--graph", "single", "--lambda", "0.5"]);
    assert!(out.status.success());
    let rep = stdout_json(&out);
    assert_eq!(rep["independent_sets"], 2);
    assert_eq!(rep["scheduling"]["r_star"][0].as_f64().unwrap(), 0.0);
    assert_eq!(rep["scheduling"]["infeasible"], false);
}

#[test]
fn analyze_flags_inadmissible_load() {
    let out = csma(&["analyze", "--graph", "clique2", "--lambda", "0.6,0.6"]);
    assert!(out.status.success());
    let rep = stdout_json(&out);
    let s = &rep["scheduling"];
    assert_eq!(s["infeasible"], true);
    assert!(s["admissibility"]["max_slack"].as_f64().unwrap() < 0.0);
    let w: Vec<f64> = s["admissibility"]["separating_weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    // the certificate: every schedule has w-weight below w·λ
    assert!(w.iter().all(|&x| x >= 0.0));
    assert!(w.iter().map(|x| x * 0.6).sum::<f64>() > w.iter().cloned().fold(0.0, f64::max));
}

#[test]
fn analyze_clique_bound_is_log3_over_beta() {
    let out = csma(&["analyze", "--graph", "clique2", "--utilities", "log-shifted", "--beta", "10"]);
    assert!(out.status.success());
    let rep = stdout_json(&out);
    let c = &rep["congestion"];
    assert!((c["bound"].as_f64().unwrap() - 3f64.ln() / 10.0).abs() < 1e-15);
    assert_eq!(c["holds"], true);
    assert!(rep["chain"]["states"] == 3);
}

#[test]
fn analyze_rejects_bad_input() {
    assert_eq!(csma(&["analyze", "--graph", "nonesuch", "--lambda", "0.1"]).status.code(), Some(2));
    assert_eq!(csma(&["analyze", "--graph", "path3", "--lambda", "0.1,0.2"]).status.code(), Some(2));
    assert_eq!(csma(&["analyze", "--graph", "path3"]).status.code(), Some(2));
    assert_eq!(csma(&["analyze", "--graph", "path3", "--utilities", "log-shifted"]).status.code(), Some(2));
}

#[test]
fn analyze_reads_edge_list_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "g.txt", "# triangle\n3\n0 1\n1 2\n0 2\n");
    let out = csma(&["analyze", "--graph", &p, "--lambda", "0.3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["independent_sets"], 4);
}

#[test]
fn presets_are_listed_and_load() {
    let out = csma(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert!(names.contains(&"cycle5") && names.contains(&"clique2"));
    for name in names {
        let rep = csma(&["analyze", "--graph", name, "--lambda", "0.05"]);
        assert!(rep.status.success(), "{name}");
    }
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(root).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        csma_core::sim::ExperimentConfig::from_json(&text).unwrap();
        seen += 1;
    }
    assert!(seen >= 4);
}
