mod common;

use common::*;
use serde_json::Value;
use std::path::Path;

fn estimate_synth(dir: &Path, id: &str, label: &str, extra: &[&str]) -> std::process::Output {
    let mask = dir.join("masks").join(format!("{id}.png"));
    let corners = dir.join("corners").join(format!("{id}.json"));
    let (intrinsics, density, db) = (dir.join("intrinsics.json"), dir.join("density.csv"), dir.join("meshes"));
    let mut args = vec![
        "estimate",
        "--mask",
        p(&mask),
        "--corners",
        p(&corners),
        "--intrinsics",
        p(&intrinsics),
        "--density",
        p(&density),
        "--label",
        label,
    ];
    args.extend_from_slice(&["--mesh-db", p(&db)]);
    args.extend_from_slice(extra);
    run(&args)
}

fn truth_volume(dir: &Path, id: &str) -> f64 {
    let truth = read_json(&dir.join("truth.json"));
    truth.as_array().unwrap().iter().find(|t| t["id"] == id).unwrap()["volume_ml"].as_f64().unwrap()
}

#[test]
fn canonical_cube_estimate_within_three_percent() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--output-dir", p(dir.path()), "--fixtures", "cube", "--scales", "1"]);
    let o = estimate_synth(dir.path(), "cube_k1", "cube", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rec: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_schema("estimate_record.schema.json", &rec);
    let v = rec["volume_ml"].as_f64().unwrap();
    assert!((v / 64.0 - 1.0).abs() < 0.03, "volume {v}");
    assert!(rec["scale"].as_f64().unwrap() > 0.0);
    let e = rec["energy_kcal"].as_f64().unwrap();
    assert!((e - 0.9 * v).abs() < 1e-9);
}

#[test]
fn scales_bracket_cubic_law() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--output-dir", p(dir.path()), "--fixtures", "icosphere", "--scales", "0.5,1,2"]);
    let mut vols = Vec::new();
    for tag in ["k0p5", "k1", "k2"] {
        let id = format!("icosphere_{tag}");
        let o = estimate_synth(dir.path(), &id, "icosphere", &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        let rec: Value = serde_json::from_str(&stdout(&o)).unwrap();
        let v = rec["volume_ml"].as_f64().unwrap();
        let truth = truth_volume(dir.path(), &id);
        assert!((v / truth - 1.0).abs() < 0.03, "{id}: {v} vs {truth}");
        vols.push(v);
    }
    assert!(vols[0] < vols[1] && vols[1] < vols[2]);
    assert!((vols[2] / vols[1] / 8.0 - 1.0).abs() < 0.05);
    assert!((vols[1] / vols[0] / 8.0 - 1.0).abs() < 0.05);
}

#[test]
fn missing_mask_is_an_input_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--output-dir", p(dir.path()), "--fixtures", "cube"]);
    std::fs::remove_file(dir.path().join("masks/cube_k1.png")).unwrap();
    let o = estimate_synth(dir.path(), "cube_k1", "cube", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cube_k1.png"), "{}", stderr(&o));
}

#[test]
fn ablation_flags_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--output-dir", p(dir.path()), "--fixtures", "cube"]);
    let o = estimate_synth(dir.path(), "cube_k1", "cube", &["--ablate", "zero_tx,zero_ty,zero_theta"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rec: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rec["ablation"], serde_json::json!({"zero_tx": true, "zero_ty": true, "zero_theta_z": true}));
    assert_eq!(rec["pose"], serde_json::json!({"tx": 0.0, "ty": 0.0, "theta_z": 0.0}));
}

#[test]
fn estimate_from_manifest_and_env_mesh_db() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_random(dir.path(), 3, 1, "1");
    let out = ok(&["estimate", "--manifest", p(&manifest), "--scene", "torus_k1_000"]);
    let rec: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(rec["label"], "torus");

    // Without a mesh_db entry the environment variable supplies it.
    let mut m = read_json(&manifest);
    m.as_object_mut().unwrap().remove("mesh_db");
    let bare = dir.path().join("bare.json");
    std::fs::write(&bare, m.to_string()).unwrap();
    let o = run(&["estimate", "--manifest", p(&bare), "--scene", "torus_k1_000"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = bin()
        .args(["estimate", "--manifest", p(&bare), "--scene", "torus_k1_000"])
        .env("PORTION_MESH_DB", dir.path().join("meshes"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), out);
}

#[test]
fn estimate_writes_record_and_debug_images() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--output-dir", p(dir.path()), "--fixtures", "torus"]);
    let out = dir.path().join("out");
    let o = estimate_synth(dir.path(), "torus_k1", "torus", &["--debug-render", "--output-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(&out.join("torus_k1.json")), serde_json::from_str::<Value>(&stdout(&o)).unwrap());
    for suffix in ["observed", "rendered", "overlay"] {
        assert!(out.join(format!("debug/torus_k1_{suffix}.png")).is_file(), "{suffix}");
    }
}

#[test]
fn random_synth_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth_random(a.path(), 7, 2, "0.8");
    synth_random(b.path(), 7, 2, "0.8");
    for rel in ["manifest.json", "truth.json", "masks/cube_k0p8_001.png", "corners/torus_k0p8_000.json"] {
        assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{rel}");
    }
    let c = tempfile::tempdir().unwrap();
    synth_random(c.path(), 8, 2, "0.8");
    assert_ne!(
        std::fs::read(a.path().join("truth.json")).unwrap(),
        std::fs::read(c.path().join("truth.json")).unwrap()
    );
}

#[test]
fn synth_outputs_match_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_random(dir.path(), 1, 1, "1,1.25");
    assert_schema("manifest.schema.json", &read_json(&manifest));
    assert_schema("synth_truth.schema.json", &read_json(&dir.path().join("truth.json")));
}

#[test]
fn camera_facing_away_is_a_geometry_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--output-dir", p(dir.path()), "--fixtures", "cube", "--elevation", "-40"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("faces away"));
}

#[test]
fn evaluate_metrics_match_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_random(dir.path(), 21, 2, "1");
    let out = dir.path().join("eval");
    ok(&["evaluate", "--manifest", p(&manifest), "--output-dir", p(&out)]);
    let report = read_json(&out.join("report.json"));
    assert_schema("metrics_report.schema.json", &report);
    assert!(std::fs::read_to_string(out.join("report.txt")).unwrap().contains("VMAE"));

    let mut rdr = csv::Reader::from_path(out.join("scenes.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (mut dv, mut pv, mut de, mut pe, mut n) = (0.0, 0.0, 0.0, 0.0, 0);
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let f = |name: &str| rec[col(name)].parse::<f64>().unwrap();
        assert_eq!(&rec[col("status")], "ok");
        dv += (f("volume_est_ml") - f("volume_true_ml")).abs();
        pv += (f("volume_est_ml") - f("volume_true_ml")).abs() / f("volume_true_ml");
        de += (f("energy_est_kcal") - f("energy_true_kcal")).abs();
        pe += (f("energy_est_kcal") - f("energy_true_kcal")).abs() / f("energy_true_kcal");
        n += 1;
    }
    let o = &report["overall"];
    assert_eq!(o["n"], n);
    let close = |a: f64, b: &Value| (a - b.as_f64().unwrap()).abs() <= 1e-9 * a.abs().max(1.0);
    assert!(close(dv / n as f64, &o["vmae"]));
    assert!(close(100.0 * pv / n as f64, &o["vmape"]));
    assert!(close(de / n as f64, &o["emae"]));
    assert!(close(100.0 * pe / n as f64, &o["emape"]));
}

#[test]
fn sweep_writes_one_report_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_random(dir.path(), 5, 1, "1");
    let out = dir.path().join("sweep");
    ok(&["evaluate", "--manifest", p(&manifest), "--output-dir", p(&out), "--ablate", "sweep", "--single-pass"]);
    for row in ["zero_tx", "zero_ty", "zero_tx+zero_ty", "zero_theta_z", "none"] {
        let r = read_json(&out.join(row).join("report.json"));
        assert_schema("metrics_report.schema.json", &r);
        assert!(out.join(row).join("scenes.csv").is_file());
    }
    let all = read_json(&out.join("sweep.json"));
    assert_eq!(all.as_array().unwrap().len(), 5);
    for r in all.as_array().unwrap() {
        assert_schema("metrics_report.schema.json", r);
    }
}

#[test]
fn empty_manifest_and_total_failure_exit_five() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_random(dir.path(), 2, 1, "1");
    let mut m = read_json(&manifest);
    m["scenes"] = serde_json::json!([]);
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, m.to_string()).unwrap();
    let o = run(&["evaluate", "--manifest", p(&empty), "--output-dir", p(&dir.path().join("e"))]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));

    // Blank masks make every scene fail.
    for entry in std::fs::read_dir(dir.path().join("masks")).unwrap() {
        let path = entry.unwrap().path();
        let blank = portion3d::Silhouette::new(1280, 720).unwrap();
        blank.save_png(&path).unwrap();
    }
    let o = run(&["evaluate", "--manifest", p(&manifest), "--output-dir", p(&dir.path().join("f"))]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn test_only_split_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_random(dir.path(), 9, 5, "1");
    let run_split = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "evaluate", "--manifest", p(&manifest), "--output-dir", p(&out), "--test-only", "--split-seed", seed,
            "--single-pass",
        ]);
        std::fs::read_to_string(out.join("scenes.csv")).unwrap()
    };
    let a = run_split("4", "a");
    let b = run_split("4", "b");
    assert_eq!(a, b);
    // 5 per class at 20 % → one test scene per class.
    assert_eq!(a.lines().count(), 1 + 3);
    let report = read_json(&dir.path().join("a/report.json"));
    assert_eq!(report["n_total"], 3);
}

#[test]
fn test_only_uses_manifest_tags() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_random(dir.path(), 9, 2, "1");
    let mut m = read_json(&manifest);
    for (i, s) in m["scenes"].as_array_mut().unwrap().iter_mut().enumerate() {
        s["split"] = Value::from(if i % 2 == 0 { "train" } else { "test" });
    }
    std::fs::write(&manifest, m.to_string()).unwrap();
    let out = dir.path().join("tagged");
    ok(&["evaluate", "--manifest", p(&manifest), "--output-dir", p(&out), "--test-only", "--single-pass"]);
    let csv = std::fs::read_to_string(out.join("scenes.csv")).unwrap();
    let ids: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ["cube_k1_001", "icosphere_k1_001", "torus_k1_001"]);
}

#[test]
fn render_draws_fixture_silhouette() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--output-dir", p(dir.path()), "--fixtures", "cube"]);
    let png = dir.path().join("render.png");
    let out = ok(&[
        "render",
        "--intrinsics",
        p(&dir.path().join("intrinsics.json")),
        "--corners",
        p(&dir.path().join("corners/cube_k1.json")),
        "--fixture",
        "cube",
        "--tx",
        "1.8",
        "--ty",
        "8",
        "--output",
        p(&png),
    ]);
    let summary: Value = serde_json::from_str(&out).unwrap();
    assert_schema("render_summary.schema.json", &summary);
    // Same pose as the synthetic scene, so the silhouettes agree.
    let rendered = portion3d::Silhouette::load_png(&png).unwrap();
    let observed = portion3d::Silhouette::load_png(&dir.path().join("masks/cube_k1.png")).unwrap();
    let diff = rendered.bits().iter().zip(observed.bits()).filter(|(a, b)| a != b).count();
    assert!(diff * 100 < observed.count(), "{diff} of {}", observed.count());
}

#[test]
fn jobs_zero_is_rejected() {
    let o = run(&["--jobs", "0", "synth", "--output-dir", "unused"]);
    assert_eq!(o.status.code(), Some(2));
}
