use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skeleta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json output")
}

#[test]
fn validate_reports_genus() {
    let v = json(&["validate", "--graph", &data("theta.json"), "--divisor", "a:1,b:1"]);
    assert_eq!(v["genus"], 2);
    assert_eq!(v["degree"], 2);
    let v = json(&[
        "validate",
        "--graph",
        &data("pencil_graph.json"),
        "--slopes",
        &data("pencil_structure.json"),
    ]);
    assert_eq!(v["slopes"], "slope structure");
}

#[test]
fn canonical_and_zhang() {
    let k = json(&["canonical", "--graph", "theta"]);
    assert_eq!(k["degree"], 2);
    let z = json(&["zhang", "--graph", &data("circle.json")]);
    assert_eq!(z["mass"], "1");
    assert_eq!(z["constant"], "1/4");
}

#[test]
fn resistance_and_green() {
    // arcs of length 1 and 2 in parallel
    let r = json(&["resistance", "--graph", "circle", "--from", "x", "--to", "y"]);
    assert_eq!(r["resistance"], "2/3");
    let rows = json(&["resistance", "--graph", "dumbbell"]);
    let bridge = rows
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["edge"] == "bridge")
        .unwrap();
    assert_eq!(bridge["rho"], "inf");
    assert_eq!(bridge["foster"], "0");
    let g = json(&["green", "--graph", "circle", "--admissible", "--x", "x", "--y", "x"]);
    assert_eq!(g["green"], "1/2");
    let g = json(&["green", "--graph", "circle", "--z", "x", "--x", "y", "--y", "y"]);
    assert_eq!(g["green"], "2/3");
}

#[test]
fn reduce_and_rank() {
    let pencil = data("pencil_graph.json");
    let v = json(&["reduce", "--graph", &pencil, "--divisor", "x:2", "--at", "y"]);
    let coeffs = v["reduced"]["coeffs"].as_array().unwrap();
    let at_y = coeffs
        .iter()
        .find(|c| c["point"]["vertex"] == "y")
        .map_or(0, |c| c["c"].as_i64().unwrap());
    // a degree-two divisor of rank one on a genus-one graph
    assert!(at_y >= 1);
    assert_eq!(coeffs.iter().map(|c| c["c"].as_i64().unwrap()).sum::<i64>(), 2);
    let r = json(&["rank", "--graph", &pencil, "--divisor", "x:2"]);
    assert_eq!(r["rank"], 1);
    let r = json(&["rank", "--graph", &pencil, "--divisor", "x:1,y:-1"]);
    assert_eq!(r["rank"], -1);
}

#[test]
fn grd_check_on_the_pencil() {
    let args = [
        "grd-check",
        "--graph",
        &data("pencil_graph.json"),
        "--divisor",
        &data("pencil_divisor.json"),
        "--slopes",
        &data("pencil_structure.json"),
        "--grid",
        "1/4",
    ];
    let v = json(&args);
    assert_eq!(v["grd"], true);
}

#[test]
fn weierstrass_degrees() {
    let v = json(&[
        "weierstrass",
        "--graph",
        &data("pencil_graph.json"),
        "--slopes",
        &data("pencil_slopes.json"),
    ]);
    assert_eq!(v["degree"], "4");
    let v = json(&[
        "weierstrass",
        "--graph",
        &data("circle_series3_graph.json"),
        "--slopes",
        &data("circle_series3_slopes.json"),
        "--mode",
        "tropical-surrogate",
    ]);
    assert_eq!(v["degree"], "9");
}

#[test]
fn okounkov_on_arithmetic_family() {
    let v = json(&["okounkov", "--slopes", &data("arithmetic_family.json")]);
    assert_eq!(v["width_defect"], "-1/12");
    assert_eq!(v["sminmax_gap"], "0");
    assert_eq!(v["fekete"]["s_min_upper"], "0");
}

#[test]
fn equidist_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "equidist",
        "--graph",
        "circle",
        "--divisor",
        "x:1",
        "--n-max",
        "200",
        "--snapshots",
        "20,200",
        "--out",
        dir.path().to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv, String::from_utf8(out.stdout).unwrap());
    assert!(csv.starts_with("n,edge,lhs_pr5,target,osc_phi,l1_binned,deg_Wn,mass_err\n"));
    // three edges per n
    assert_eq!(csv.lines().count(), 1 + 3 * 200);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "tropical-surrogate");
    assert!(report["label"].as_str().unwrap().starts_with("tropical-surrogate"));
}

#[test]
fn equidist_exit_code_follows_verdicts() {
    // two nearby snapshots cannot show a five-fold drop
    let out = run(&[
        "equidist",
        "--config",
        &data("theta_experiment.json"),
        "--n-max",
        "30",
        "--snapshots",
        "20,30",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Fail: equidistribution-trend"), "{err}");
}

#[test]
fn explicit_mode_on_the_pencil() {
    let v = json(&[
        "equidist",
        "--graph",
        &data("pencil_graph.json"),
        "--divisor",
        &data("pencil_divisor.json"),
        "--n-max",
        "1",
        "--mode",
        "explicit",
        "--slopes",
        &data("pencil_slopes.json"),
    ]);
    assert_eq!(v["snapshots"][0]["deg_w"], "4");
    assert_eq!(v["snapshots"][0]["mass_err"], "0");
}

#[test]
fn errors_exit_with_one() {
    let out = run(&["zhang", "--graph", "no-such-graph"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("neither a file nor a fixture"));
    let out = run(&["zhang", "--graph", &data("dumbbell.json")]);
    assert!(out.status.success());
}
