mod common;

use std::fs;
use std::path::Path;

use common::{metric, read_json, read_jsonl, run, run_env, tree_bytes, World};
use serde_json::Value;
use sketchforge_core::datamodel::SketchRecord;

fn fixture_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/count")
}

#[test]
fn bundled_count_fixture_scores_two_of_three() {
    let out = tempfile::tempdir().unwrap();
    let cfg = fixture_dir().join("config.toml").display().to_string();
    let set = format!("out_dir={}", out.path().display());
    let r = run(&["score", "--task", "count", "--config", &cfg, "--set", &set]);
    assert_eq!(r.code, 0, "{r:?}");
    let report = read_json(&out.path().join("score_count.json"));
    let acc = metric(&report, 0, "Acc").unwrap();
    assert!((acc - 200.0 / 3.0).abs() < 1e-9);
    let csv = fs::read_to_string(out.path().join("score_count.csv")).unwrap();
    assert!(csv.contains("66.7"), "{csv}");
    assert_eq!(r.stdout_json()["status"], "ok");
}

#[test]
fn mix_build_then_audit_is_clean() {
    let w = World::new();
    let out = w.path("out");
    let r = w.run_in("config.toml", &out, &["mix-build"], &[]);
    assert_eq!(r.code, 0, "{r:?}");
    let r = w.run_in("config.toml", &out, &["mix-audit"], &[]);
    assert_eq!(r.code, 0, "{r:?}");
    assert_eq!(r.stdout_json()["summary"]["violations"], 0);
    let map = fs::read_to_string(out.join("taxonomy_map.jsonl")).unwrap();
    assert!(map.contains("\"Zebra\"") && map.contains("\"class_id\":5"), "{map}");
    assert!(map.contains("\"unicornish\"") && map.contains("\"class_id\":null"), "{map}");
}

#[test]
fn tampered_pool_fails_audit_with_exit_2() {
    let w = World::new();
    let out = w.path("out");
    assert_eq!(w.run_in("config.toml", &out, &["mix-build"], &[]).code, 0);
    // drop most of class 0's pool
    let pools: Vec<SketchRecord> = read_jsonl(&out.join("pools.jsonl"));
    let mut kept: Vec<&SketchRecord> = pools.iter().filter(|s| s.class_id != 0).collect();
    kept.extend(pools.iter().filter(|s| s.class_id == 0).take(20));
    let bad = w.path("bad_pools.jsonl");
    sketchforge_core::jsonl::write_jsonl(&bad, None, &kept).unwrap();
    let set = format!("mix.pools={}", bad.display());
    let r = w.run_in("config.toml", &out, &["mix-audit"], &["--set", &set]);
    assert_eq!(r.code, 2, "{r:?}");
    let err = r.stderr_json();
    assert_eq!(err["status"], "error");
    assert_eq!(err["exit_code"], 2);
    let audit = fs::read_to_string(out.join("mix_audit.csv")).unwrap();
    assert!(audit.lines().count() > 1);
}

#[test]
fn missing_input_is_a_validation_error() {
    let w = World::new();
    let out = w.path("out");
    let r = w.run_in("config.toml", &out, &["gallery-build"], &["--set", "gallery.images=nope.jsonl"]);
    assert_eq!(r.code, 2, "{r:?}");
    let err = r.stderr_json();
    assert_eq!(err["kind"], "validation");
    assert!(err["message"].as_str().unwrap().contains("nope.jsonl"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let w = World::new();
    let r = w.run_in("config.toml", &w.path("out"), &["mix-build"], &["--set", "mix.bogus=1"]);
    assert_eq!(r.code, 2, "{r:?}");
    let r = w.run_in("config.toml", &w.path("out"), &["mix-build"], &["--workers", "0"]);
    assert_eq!(r.code, 2, "{r:?}");
}

#[test]
fn shortfall_is_partial_with_exit_3() {
    let w = World::new();
    let out = w.path("out");
    let r = w.run_in("config.toml", &out, &["instr-build"], &["--set", "instr.scale=0.01"]);
    assert_eq!(r.code, 3, "{r:?}");
    let line = r.stdout_json();
    assert_eq!(line["status"], "partial");
    assert!(!line["summary"]["shortfalls"].as_array().unwrap().is_empty());
    assert!(out.join("instructions.jsonl.partial").is_file());
    assert!(!out.join("instructions.jsonl").exists());
    let m = read_json(&out.join("instr-build.manifest.json"));
    assert_eq!(m["status"], "partial");
}

#[test]
fn rerun_from_manifest_reproduces_outputs() {
    let w = World::new();
    let out = w.path("out");
    assert_eq!(w.run_in("config.toml", &out, &["instr-build"], &[]).code, 0);
    let first = tree_bytes(&out);
    let manifest = out.join("instr-build.manifest.json");
    let m = read_json(&manifest);
    assert_eq!(m["status"], "ok");
    assert!(m["inputs"].as_array().unwrap().iter().all(|d| d["sha256"].as_str().unwrap().len() == 64));
    let saved = w.path("saved.manifest.json");
    fs::copy(&manifest, &saved).unwrap();
    fs::remove_dir_all(&out).unwrap();
    let r = run(&["instr-build", "--config", &saved.display().to_string()]);
    assert_eq!(r.code, 0, "{r:?}");
    assert_eq!(tree_bytes(&out), first);
    let again = read_json(&manifest);
    assert_eq!(again["outputs"], m["outputs"]);
}

#[test]
fn seed_changes_outputs() {
    let w = World::new();
    let (a, b) = (w.path("a"), w.path("b"));
    assert_eq!(w.run_in("config.toml", &a, &["instr-build"], &[]).code, 0);
    assert_eq!(w.run_in("config.toml", &b, &["instr-build"], &["--seed", "8"]).code, 0);
    assert_ne!(tree_bytes(&a)["instructions.jsonl"], tree_bytes(&b)["instructions.jsonl"]);
}

#[test]
fn config_found_through_environment() {
    let w = World::new();
    fs::copy(w.path("report.toml"), w.path("sketchforge.toml")).unwrap();
    let r = run_env(&["report"], &[("SKETCHFORGE_CONFIG_DIR", w.root())]);
    assert_eq!(r.code, 0, "{r:?}");
    assert!(w.path("out/report.csv").is_file());
    let r = run_env(&["report", "--config", "report.toml"], &[("SKETCHFORGE_CONFIG_DIR", w.root())]);
    assert_eq!(r.code, 0, "{r:?}");
    let r = run(&["report"]);
    assert_eq!(r.code, 2, "{r:?}");
}

#[test]
fn report_adds_dataset_averages() {
    let w = World::new();
    let out = w.path("out");
    let r = w.run_in("config.toml", &out, &["report"], &[]);
    assert_eq!(r.code, 0, "{r:?}");
    let csv = fs::read_to_string(out.join("count_table.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "model,metric,PixMo: Sketchy,PixMo: QuickDraw,PixMo: Avg.,CountBench: Sketchy,CountBench: Avg."
    );
    assert_eq!(lines[1], "alpha,Acc,40.0,50.0,45.0,30.0,30.0");
    assert_eq!(lines[2], "beta,Acc,20.0,-,20.0,-,-");
    let md = fs::read_to_string(out.join("count_table.md")).unwrap();
    assert!(md.contains("| alpha |"));
}

#[test]
fn score_detection_from_config() {
    let w = World::new();
    let out = w.path("out");
    let r = w.run_in("config.toml", &out, &["score"], &[]);
    assert_eq!(r.code, 0, "{r:?}");
    let report = read_json(&out.join("score_bbox.json"));
    let row = &report["rows"][0];
    assert_eq!(row["n"], 24);
    assert_eq!(row["missing"], 6);
    assert_eq!(row["unparseable"], 6);
    let names: Vec<&str> = row["metrics"].as_array().unwrap().iter().map(|m| m["name"].as_str().unwrap()).collect();
    for n in ["Acc", "Acc@0.5", "Acc_S", "Acc_M", "Acc_L", "mAP", "mAP@0.5", "mAP_S", "mAP_M", "mAP_L"] {
        assert!(names.contains(&n), "{names:?}");
    }
    let acc = metric(&report, 0, "Acc").unwrap();
    assert!(acc > 0.0 && acc < 100.0, "{acc}");
}

#[test]
fn score_vqa_and_sbir() {
    let w = World::new();
    let out = w.path("out");
    let r = w.run_in("score_vqa.toml", &out, &["score"], &[]);
    assert_eq!(r.code, 0, "{r:?}");
    let v = read_json(&out.join("score_vqa.json"));
    assert_eq!(metric(&v, 0, "Conformance"), Some(90.0));
    let r = w.run_in("score_sbir.toml", &out, &["score"], &[]);
    assert_eq!(r.code, 0, "{r:?}");
    let s = read_json(&out.join("score_sbir.json"));
    assert_eq!(metric(&s, 0, "Acc@1"), Some(100.0));
    assert!((metric(&s, 1, "Acc@10").unwrap() - 30.0).abs() < 1e-9);
}

#[test]
fn sbir_with_missing_scores_is_rejected() {
    let w = World::new();
    let scores = fs::read_to_string(w.path("sbir_scores_perfect.jsonl")).unwrap();
    let cut: String = scores.lines().skip(1).map(|l| format!("{l}\n")).collect();
    fs::write(w.path("sbir_scores_perfect.jsonl"), cut).unwrap();
    let r = w.run_in("score_sbir.toml", &w.path("out"), &["score"], &[]);
    assert_eq!(r.code, 2, "{r:?}");
}

#[test]
fn sketch_gen_writes_pngs_and_skips() {
    let w = World::new();
    let out = w.path("out");
    let r = w.run_in("config.toml", &out, &["sketch-gen"], &[]);
    assert_eq!(r.code, 0, "{r:?}");
    let recs: Vec<SketchRecord> = read_jsonl(&out.join("sketches.jsonl"));
    assert_eq!(recs.len(), 11);
    for rec in &recs {
        let img = image::open(out.join(&rec.path)).unwrap().to_luma8();
        assert_eq!(img.dimensions(), (128, 128));
        assert!(img.pixels().all(|p| p.0[0] == 0 || p.0[0] == 255));
    }
    let skips: Vec<Value> = read_jsonl(&out.join("sketch_skips.jsonl"));
    assert_eq!(skips.len(), 1);
    assert_eq!(skips[0]["instance_id"], "sg5_1");
}
