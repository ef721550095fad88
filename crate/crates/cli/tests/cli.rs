use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse-depth"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn manifest(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn ok(out: &Output) {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_1d_writes_profile_with_requested_corners() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gen", "--1d", "--n", "2000", "--corners", "15", "--seed", "7", "-o", "p.csv"]);
    ok(&out);
    let text = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("1,2000"));
    let m = manifest(&dir.path().join("p.csv.manifest.json"));
    assert_eq!(m["results"]["corner_count"], 15);
    assert_eq!(m["seed"], 7);
    assert_eq!(m["command"], "gen");
    assert!(m["argv"].as_array().unwrap().iter().any(|a| a == "--corners"));
}

#[test]
fn reconstruct_reports_objective_and_feasibility() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &["gen", "--1d", "--n", "300", "--corners", "5", "--seed", "2", "-o", "p.csv"]));
    ok(&run(
        dir.path(),
        &["sample", "--in", "p.csv", "--perc-samples", "20", "--add-boundary", "--eps", "0.1", "-o", "s.json"],
    ));
    let out = run(
        dir.path(),
        &["reconstruct", "--in", "p.csv", "--samples", "s.json", "--objective", "l1diag", "--eps", "0.1", "-o", "out.csv"],
    );
    ok(&out);
    let m = manifest(&dir.path().join("out.csv.manifest.json"));
    let objective = m["results"]["objective"].as_f64().unwrap();
    let residual = m["results"]["feasibility_residual"].as_f64().unwrap();
    assert!(objective.is_finite() && objective >= 0.0);
    assert!(residual <= 0.1, "residual {residual}");
    assert!(m["metrics"]["mean_l1"].as_f64().is_some());
    assert!(dir.path().join("out.csv").exists());
}

#[test]
fn cart_objective_without_coordinates_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["reconstruct", "--samples", "s.json", "--objective", "l1cart", "-o", "out.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn usage_and_runtime_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["gen", "--1d", "--3d", "-o", "x.csv"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
    let missing = run(dir.path(), &["reconstruct", "--samples", "absent.json", "-o", "out.csv"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn compress_then_decompress_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(
        dir.path(),
        &["gen", "--3d", "--rows", "24", "--cols", "30", "--folds", "2", "--seed", "4", "-o", "im.csv"],
    ));
    ok(&run(dir.path(), &["compress", "--in", "im.csv", "--add-boundary", "-o", "im.sdc"]));
    let c = manifest(&dir.path().join("im.sdc.manifest.json"));
    assert!(c["results"]["byte_saving"].as_f64().unwrap() > 0.0);
    ok(&run(
        dir.path(),
        &[
            "decompress", "--in", "im.sdc", "--truth", "im.csv", "--mu-f", "1e-5", "--tau", "1e-9", "--K", "20000",
            "-o", "dec.pgm",
        ],
    ));
    let d = manifest(&dir.path().join("dec.pgm.manifest.json"));
    assert!(d["metrics"]["mean_l1"].as_f64().unwrap() < 5e-3, "{}", d["metrics"]);
}

#[test]
fn multiframe_merges_translated_frames() {
    let dir = tempfile::tempdir().unwrap();
    // Two 5x5 frames of a fronto-parallel plane; the past frame sits 0.5
    // behind the current camera.
    let frame = |depth: f64| {
        serde_json::json!({
            "len": 25, "shape": [5, 5], "indices": [1, 13], "values": [depth, depth], "epsilon": 0.0
        })
    };
    std::fs::write(dir.path().join("f0.json"), frame(2.0).to_string()).unwrap();
    std::fs::write(dir.path().join("f1.json"), frame(2.5).to_string()).unwrap();
    let id = serde_json::json!({"rotation": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]});
    let poses = serde_json::json!([
        {"rotation": id["rotation"], "translation": [0.0, 0.0, 0.0]},
        {"rotation": id["rotation"], "translation": [0.0, 0.0, -0.5]},
    ]);
    std::fs::write(dir.path().join("poses.json"), poses.to_string()).unwrap();
    let out = run(
        dir.path(),
        &[
            "multiframe", "--frames", "f0.json,f1.json", "--poses", "poses.json", "--fx", "4", "--fy", "4", "--cx",
            "2", "--cy", "2", "--schedule", "0,0.05", "-o", "merged.json",
        ],
    );
    ok(&out);
    let merged = manifest(&dir.path().join("merged.json"));
    let values = merged["values"].as_array().unwrap();
    assert!(values.iter().all(|v| (v.as_f64().unwrap() - 2.0).abs() < 1e-9), "{merged}");
}

#[test]
fn bench_writes_one_row_per_method_and_point() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(
        dir.path(),
        &["bench", "--seeds", "2", "--n", "120", "--corners", "3", "--values", "20,50", "-o", "b.csv"],
    ));
    let table = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 2);
}
