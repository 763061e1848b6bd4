use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ovd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ovd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn ovd")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = ovd(dir, args);
    assert!(
        out.status.success(),
        "ovd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn setup(dir: &Path) {
    ok_json(dir, &["gen-bank", "--out", "bank.json"]);
    ok_json(dir, &["gen-scene", "--out", "scene.json", "--bank", "bank.json", "--seed", "5"]);
    ok_json(dir, &["encode", "--scene", "scene.json", "--bank", "bank.json", "--out", "feats"]);
    ok_json(dir, &["propose", "--scene", "scene.json", "--out", "props.json"]);
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    let r = ok_json(
        d,
        &["rerank", "--proposals", "props.json", "--pyramid", "feats", "--bank", "bank.json", "--alpha", "0.5", "--topk", "20", "--out", "kept.json", "--classify", "cls.json"],
    );
    assert_eq!(r["kept"], 20);
    let classified: Value = serde_json::from_str(&std::fs::read_to_string(d.join("cls.json")).unwrap()).unwrap();
    assert_eq!(classified.as_array().unwrap().len(), 20);

    let e = ok_json(d, &["eval-recall", "--kept", "kept.json", "--scene", "scene.json", "--k", "20", "--out", "recall.json"]);
    for key in ["recall_base", "recall_novel", "recall_all"] {
        let v = e[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(d.join("recall.json").exists());

    let c = ok_json(d, &["build-cache", "--scene", "scene.json", "--bank", "bank.json", "--proposals", "props.json", "--out", "cache"]);
    assert!(c["entries"].as_u64().unwrap() <= 100);
    assert!(d.join("cache/cache.json").exists());
}

#[test]
fn nvt_dir_backend_matches_synthetic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    ok_json(d, &["encode", "--scene", "scene.json", "--backend", "nvt-dir", "--features", "feats/layers", "--out", "feats2"]);
    for level in ["F2", "F3", "F4", "F5", "F6"] {
        let a = std::fs::read(d.join(format!("feats/{level}.nvt"))).unwrap();
        let b = std::fs::read(d.join(format!("feats2/{level}.nvt"))).unwrap();
        assert_eq!(a, b, "{level}");
    }
}

#[test]
fn alpha_one_matches_objectness_order() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    ok_json(d, &["rerank", "--proposals", "props.json", "--pyramid", "feats", "--bank", "bank.json", "--alpha", "1", "--topk", "30", "--out", "kept.json"]);
    let kept: Value = serde_json::from_str(&std::fs::read_to_string(d.join("kept.json")).unwrap()).unwrap();
    let scores: Vec<f64> = kept.as_array().unwrap().iter().map(|p| p["score_rpn"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

fn write_nvt(path: &Path, rows: &[&[f32]]) {
    let mut b = b"NVT1".to_vec();
    b.push(0);
    b.push(2);
    b.extend((rows.len() as u32).to_le_bytes());
    b.extend((rows[0].len() as u32).to_le_bytes());
    for r in rows {
        for v in *r {
            b.extend(v.to_le_bytes());
        }
    }
    std::fs::write(path, b).unwrap();
}

#[test]
fn losses_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_nvt(&d.join("r.nvt"), &[&[1.0, 0.0, 0.0]]);
    write_nvt(&d.join("c.nvt"), &[&[0.0, 0.0, 0.0]]);
    let v = ok_json(d, &["losses", "--roi", "r.nvt", "--cached", "c.nvt", "--kind", "l2"]);
    assert_eq!(v["value"], 1.0);
    assert_eq!(v["grad_checksum"], 2.0);
    assert!(v["fd_max_rel_err"].as_f64().unwrap() < 1e-4);

    write_nvt(&d.join("cls.nvt"), &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
    write_nvt(&d.join("f.nvt"), &[&[0.0, 0.0, 2.0]]);
    std::fs::write(d.join("labels.json"), "[1]").unwrap();
    let v = ok_json(d, &["losses", "--roi", "f.nvt", "--cached", "cls.nvt", "--kind", "cons", "--labels", "labels.json"]);
    assert!((v["value"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

    let out = ovd(d, &["losses", "--roi", "f.nvt", "--cached", "cls.nvt", "--kind", "cons"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = r#"{"ensemble": {"n_scenes": 3}, "seeds": [0, 1], "alpha_sweep": [1.0, 0.5]}"#;
    std::fs::write(d.join("exp.json"), cfg).unwrap();
    ok_json(d, &["experiment", "--config", "exp.json", "--out", "rep"]);
    ok_json(d, &["experiment", "--config", "exp.json", "--out", "rep2", "--sequential"]);
    let a = std::fs::read(d.join("rep/report.json")).unwrap();
    assert_eq!(a, std::fs::read(d.join("rep2/report.json")).unwrap());
    let csv = std::fs::read_to_string(d.join("rep/results.csv")).unwrap();
    assert!(csv.starts_with("variant,alpha,W,seed,recall_base,recall_novel,recall_all,acc\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    let bad_alpha = ovd(d, &["rerank", "--proposals", "props.json", "--pyramid", "feats", "--bank", "bank.json", "--alpha", "2", "--out", "k.json"]);
    assert_eq!(bad_alpha.status.code(), Some(2));
    std::fs::write(d.join("bad.json"), "{\"ensemble\": 3}").unwrap();
    assert_eq!(ovd(d, &["experiment", "--config", "bad.json", "--out", "x"]).status.code(), Some(2));
    assert_eq!(ovd(d, &["encode", "--scene", "scene.json", "--out", "f"]).status.code(), Some(2));
    assert_eq!(ovd(d, &["eval-recall", "--kept", "nope.json", "--scene", "scene.json"]).status.code(), Some(1));
    assert_eq!(ovd(d, &["no-such-command"]).status.code(), Some(2));
}
