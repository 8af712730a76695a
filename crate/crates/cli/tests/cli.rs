use std::path::Path;
use std::process::{Command, Output};

fn gsconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsconv")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_single_line_error(o: &Output, kind: &str) {
    assert!(!o.status.success());
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error: {kind}: ")), "{err}");
}

#[test]
fn verify_grid_passes() {
    let o = gsconv(&["verify-gs"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().last().unwrap().ends_with(", 0 failed"));
}

#[test]
fn verify_detects_corrupted_table() {
    let o = gsconv(&["verify-gs", "--no-grid", "--dims", "4,2,2,4", "--groups", "2,1,1", "--inject-corruption"]);
    assert_eq!(o.status.code(), Some(1));
    assert_single_line_error(&o, "verify");
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn verify_names_bad_axis() {
    let o = gsconv(&["verify-gs", "--no-grid", "--dims", "3,4,4,4", "--groups", "2,1,1"]);
    assert_single_line_error(&o, "config");
    assert!(stderr(&o).contains("axis D"));
}

#[test]
fn usage_errors_are_single_line() {
    let o = gsconv(&["train", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert_single_line_error(&o, "usage");
}

#[test]
fn missing_spec_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = gsconv(&["train", "--spec", "/definitely/not/here.json", "--out", out.to_str().unwrap()]);
    assert_single_line_error(&o, "io");
}

fn train_small(out: &Path, seed: &str) -> Output {
    gsconv(&[
        "train", "--task", "local", "--count", "4", "--channels", "8,8,8", "--iters", "3", "--batch", "2",
        "--log-interval", "1", "--seed", seed, "--out", out.to_str().unwrap(),
    ])
}

#[test]
fn train_is_reproducible_and_eval_checks_spec() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for p in [&a, &b] {
        let o = train_small(p, "5");
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let csv = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(b.join("metrics.csv")).unwrap());
    assert!(csv.starts_with("iter,loss,dice_class1,dice_class2,mDice,lr\n"));
    assert_eq!(csv.lines().count(), 4);
    for f in ["checkpoint.gsv", "spec.json", "manifest.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["train"]["max_iters"], 3);

    let ckpt = a.join("checkpoint.gsv");
    let args = ["eval", "--checkpoint", ckpt.to_str().unwrap(), "--task", "local", "--count", "3"];
    let (e1, e2) = (gsconv(&args), gsconv(&args));
    assert!(e1.status.success(), "{}", stderr(&e1));
    assert_eq!(stdout(&e1), stdout(&e2));
    let report: serde_json::Value = serde_json::from_str(stdout(&e1).trim()).unwrap();
    let m = report["mdice"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&m));

    // a spec that differs from the checkpoint's
    let spec = std::fs::read_to_string(a.join("spec.json")).unwrap().replace("\"csc\"", "\"ccs\"");
    let other = dir.path().join("other.json");
    std::fs::write(&other, spec).unwrap();
    let o = gsconv(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--spec", other.to_str().unwrap(), "--count", "1"]);
    assert_single_line_error(&o, "config");
}

#[test]
fn gen_then_train_from_directory() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = gsconv(&["gen", "--task", "longrange", "--count", "3", "--seed", "1", "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(data.join("manifest.json").exists());
    assert!(data.join("sample_00002.label.gsv").exists());
    let run = dir.path().join("run");
    let o = gsconv(&[
        "train", "--data", data.to_str().unwrap(), "--channels", "8,8", "--iters", "2", "--batch", "1",
        "--out", run.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"max_iters": 2, "base_lr": 0.5}"#).unwrap();
    let out = dir.path().join("run");
    let o = gsconv(&[
        "train", "--config", cfg.to_str().unwrap(), "--lr", "0.02", "--task", "local", "--count", "2",
        "--channels", "8,8", "--batch", "1", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["train"]["max_iters"], 2, "file beats default");
    assert_eq!(m["train"]["base_lr"], 0.02, "flag beats file");
    assert_eq!(m["train"]["power"], 0.9, "default");
}

#[test]
fn preset_configuration_identity() {
    let o = gsconv(&["profile", "--preset", "prosgv3", "--insert", "csc", "--input", "1,16,128,128,1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.contains("enc1.gs1,group_shift,0,0,7340032"));
    assert!(csv.lines().any(|l| l.starts_with("total,,222339,")));
    // the preset's deep groups do not fit the small synthetic volumes
    let dir = tempfile::tempdir().unwrap();
    let o = gsconv(&["train", "--preset", "prosgv3", "--insert", "csc", "--count", "1", "--iters", "1", "--out", dir.path().to_str().unwrap()]);
    assert_single_line_error(&o, "config");
    assert!(stderr(&o).contains("stage 4"));
}

#[test]
fn profile_baseline_shows_27() {
    let o = gsconv(&["profile", "--input", "1,32,32,16,1", "--baseline", "conv3", "--channels", "16,32,64"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    let enc = csv.lines().find(|l| l.starts_with("enc2.conv1,")).unwrap();
    let f: Vec<&str> = enc.split(',').collect();
    assert_eq!((f[5], f[8]), ("27.0000", "27.0000"));
    let o = gsconv(&["profile", "--input", "1,32,32,16,1", "--baseline", "conv3", "--format", "table"]);
    assert!(stdout(&o).contains("block convs"));
}

#[test]
fn bench_schema_is_stable() {
    let args = ["--threads", "1", "bench", "--dims", "8,8,8,16", "--reps", "2"];
    let keys = |o: &Output| {
        let v: serde_json::Value = serde_json::from_str(stdout(o).trim()).unwrap();
        assert_eq!(v["outputs_equal"], true);
        v.as_object().unwrap().keys().cloned().collect::<Vec<_>>()
    };
    let (a, b) = (gsconv(&args), gsconv(&args));
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(keys(&a), keys(&b));
}
