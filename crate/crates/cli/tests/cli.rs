use std::path::PathBuf;
use std::process::{Command, Output};

use qtlab_core::metric_core::WeightedGraph;
use serde_json::Value;

fn qtlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtlab")).args(args).output().expect("qtlab runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qtlab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn malformed_configs_exit_with_two() {
    let dir = scratch("malformed");
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "name = \"bad\"\nkind = \"lattice\"\nunknown_key = 3\n").unwrap();
    let out_dir = dir.join("out");
    let out = out_dir.to_str().unwrap();
    for args in [
        vec!["distortion", "--scenario", bad.to_str().unwrap(), "--out", out],
        vec!["all", "--scenario", "no_such_scenario", "--out", out],
        vec!["distortion", "--scenario", "flip3", "--out", out],
        vec!["verify-fibers", "--scenario", "flip3", "--r", "1/2", "--out", out],
        vec!["distortion", "--scenario", "bs12", "--K", "not-a-number", "--out", out],
    ] {
        let o = qtlab(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn json_reports_round_trip_and_csv_matches_rows() {
    let dir = scratch("json");
    let o = qtlab(&["distortion", "--scenario", "bs12", "--format", "csv", "--seed", "5", "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("PASS distortion_bs12")));

    let text = std::fs::read_to_string(dir.join("distortion_bs12.json")).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&doc).unwrap() + "\n", text);
    assert_eq!(doc["seed"], 5);
    assert_eq!(doc["scenario"], "bs12");
    assert!(doc["model"]["tree_model"].is_string());

    let rows = doc["data"]["rows"].as_array().unwrap().len();
    let csv = std::fs::read_to_string(dir.join("distortion_bs12.csv")).unwrap();
    assert_eq!(csv.lines().count(), rows + 1);
    assert_eq!(csv.lines().next(), Some("k,length"));

    let manifest = read_json(dir.join("manifest.json"));
    assert_eq!(manifest["pass"], true);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn dot_output_parses_back_to_the_carrier() {
    let dir = scratch("dot");
    let o = qtlab(&["build-quasitree", "--scenario", "f2_axes", "--samples", "40", "--format", "dot", "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let doc = read_json(dir.join("quasitree.json"));
    let g = WeightedGraph::from_dot(&std::fs::read_to_string(dir.join("quasitree.dot")).unwrap()).unwrap();
    assert_eq!(g.vertex_count() as u64, doc["params"]["carrier_vertices"].as_u64().unwrap());
    assert_eq!(doc["data"]["formula"]["pairs"], 40);
}

#[test]
fn lists_bundled_scenarios() {
    let o = qtlab(&["scenarios"]);
    assert!(o.status.success());
    let names = String::from_utf8_lossy(&o.stdout);
    for n in ["flip3", "twisted3", "star4", "f2_rel", "heisenberg", "sol", "bs12"] {
        assert!(names.lines().any(|l| l == n), "{n} missing");
    }
}
