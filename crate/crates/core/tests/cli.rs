mod common;

use std::process::{Command, Output};

use common::fixture;
use serde_json::Value;

fn gridzone(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridzone")).args(args).output().unwrap()
}

fn f(name: &str) -> String {
    fixture(name).display().to_string()
}

fn json_out(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn single_line_error(o: &Output, kind: &str) -> String {
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with("error: ")).collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error: {kind}: ")), "{err}");
    lines[0].to_string()
}

#[test]
fn validate_clean_fixture_set() {
    let o = gridzone(&[
        "validate",
        "--wasg",
        &f("wasg.geojson"),
        "--stats",
        &f("stats.csv"),
        "--components",
        &format!("ixp={}", f("ixps.csv")),
        "--nodes",
        &f("nodes.txt"),
        "--geo",
        &f("geo.txt"),
        "--links",
        &f("links.txt"),
        "--scenario",
        &f("scenarios.json"),
        "--problem",
        &f("problem_eq.json"),
        "--strict",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json_out(&o)["status"], "clean");
}

#[test]
fn validate_open_ring_names_feature() {
    let o = gridzone(&["validate", "--wasg", &f("open_ring.geojson")]);
    assert_eq!(o.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["findings"][0]["message"].as_str().unwrap().contains("NORDIC"));
}

#[test]
fn validate_duplicate_candidates() {
    let o = gridzone(&["validate", "--problem", &f("problem_dup.json")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_warning_exit_codes() {
    // A stats table without AU leaves a member uncovered: a warning, which
    // strict mode promotes to a violation.
    let dir = tempfile::tempdir().unwrap();
    let stats = dir.path().join("stats.csv");
    let text = std::fs::read_to_string(fixture("stats.csv")).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("AU,")).collect();
    std::fs::write(&stats, kept.join("\n")).unwrap();
    let args = ["validate", "--wasg", &f("wasg.geojson"), "--stats", stats.to_str().unwrap()];
    assert_eq!(gridzone(&args).status.code(), Some(1));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(gridzone(&strict).status.code(), Some(2));
}

#[test]
fn overlap_coverage_two_of_three() {
    let o = gridzone(&["overlap", "--wasg", &f("wasg.geojson"), "--components", &format!("ixp={}", f("ixps.csv"))]);
    let v = json_out(&o);
    assert_eq!(v["totals"]["ixp"], 3);
    assert_eq!(v["uncovered"]["ixp"], 1);
}

#[test]
fn overlap_smallest_k() {
    let o = gridzone(&[
        "overlap",
        "--wasg",
        &f("wasg.geojson"),
        "--components",
        &format!("ixp={}", f("ixps.csv")),
        "--metric",
        "ixps",
        "--cumulative",
        "0.65",
    ]);
    let v = json_out(&o);
    // EU and NA-E hold one IXP each; the third is outside every grid, so
    // two grids reach 2/3 >= 0.65.
    assert_eq!(v["smallest_k"], 2);
}

#[test]
fn overlap_missing_geo_file_names_path() {
    let o = gridzone(&[
        "overlap",
        "--wasg",
        &f("wasg.geojson"),
        "--nodes",
        &f("nodes.txt"),
        "--geo",
        "/nonexistent/geo.txt",
        "--links",
        &f("links.txt"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(single_line_error(&o, "io").contains("/nonexistent/geo.txt"));
}

#[test]
fn failure_single_wasg_all_down() {
    let o = gridzone(&[
        "failure",
        "--wasg",
        &f("single_wasg.geojson"),
        "--components",
        &f("single_components.csv"),
        "--nodes",
        &f("single_nodes.txt"),
        "--geo",
        &f("single_geo.txt"),
        "--links",
        &f("single_links.txt"),
        "--scenario",
        &f("scenario_a.json"),
    ]);
    let v = json_out(&o);
    for (metric, frac) in v["fractions"].as_object().unwrap() {
        assert_eq!(frac.as_f64(), Some(1.0), "{metric}");
    }
    assert_eq!(v["fractions"].as_object().unwrap().len(), 6);
}

#[test]
fn failure_unknown_wasg_is_error() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    std::fs::write(&s, r#"{"name": "x", "mode": "regional", "failed": ["ATLANTIS"]}"#).unwrap();
    let o = gridzone(&["failure", "--wasg", &f("wasg.geojson"), "--scenario", s.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(single_line_error(&o, "failure").contains("ATLANTIS"));
}

#[test]
fn connectivity_path_middle() {
    let o = gridzone(&["connectivity", "--graph", &f("path_graph.csv"), "--scenario", &f("scenario_b.json")]);
    let v = json_out(&o);
    assert_eq!(v["mean_reduction"], 1.0);
}

#[test]
fn connectivity_from_topology_writes_tree() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("tree.csv");
    let o = gridzone(&[
        "connectivity",
        "--wasg",
        &f("wasg.geojson"),
        "--nodes",
        &f("nodes.txt"),
        "--geo",
        &f("geo.txt"),
        "--links",
        &f("links.txt"),
        "--scenario",
        &f("scenario_eu.json"),
        "--tree-out",
        tree.to_str().unwrap(),
    ]);
    let v = json_out(&o);
    assert_eq!(v["failed"], serde_json::json!(["EU"]));
    let t = std::fs::read_to_string(tree).unwrap();
    // four grids, three tree edges
    assert_eq!(t.lines().count(), 4);
}

#[test]
fn place_three_site_fixture() {
    let o = gridzone(&["place", "--problem", &f("problem_eq.json")]);
    let v = json_out(&o);
    assert_eq!(v["chosen"], serde_json::json!(["1", "3"]));
    assert_eq!(v["objective_value"], 40.0);
    assert_eq!(v["proof"], "optimal");
}

#[test]
fn place_dump_model_lists_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let lp = dir.path().join("m.lp");
    let o = gridzone(&["place", "--problem", &f("problem_eq.json"), "--dump-model", lp.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(lp).unwrap();
    assert!(text.contains("\\ cardinality"));
    assert!(text.contains("\\ zone_cap A"));
    assert!(text.starts_with("\\ placement model"));
}

#[test]
fn place_nearest_respects_bound() {
    let v = json_out(&gridzone(&["place", "--problem", &f("problem_nearest.json")]));
    // boston's 40 ms bound can only be met from us-east
    assert_eq!(v["assignment"]["boston"], "us-east");
    assert_eq!(v["chosen"].as_array().unwrap().len(), 2);
}

#[test]
fn place_duplicate_ids_error() {
    let o = gridzone(&["place", "--problem", &f("problem_dup.json")]);
    assert_eq!(o.status.code(), Some(2));
    single_line_error(&o, "placement");
}

#[test]
fn unsupported_format_and_usage_errors() {
    let o = gridzone(&["connectivity", "--graph", &f("path_graph.csv"), "--scenario", &f("scenario_b.json"), "--format", "geojson"]);
    single_line_error(&o, "usage");
    let o = gridzone(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    single_line_error(&o, "usage");
}
