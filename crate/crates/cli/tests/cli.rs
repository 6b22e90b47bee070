use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn forgenet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forgenet"))
        .args(args)
        .args(["--threads", "1"])
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = forgenet(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn error_line(out: &Output) -> Value {
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().last().expect("an error line on stderr");
    serde_json::from_str(line).unwrap()
}

/// Small dataset plus two toy checkpoints.
fn fixture(dir: &Path) {
    ok(dir, &["generate", "--out", "data", "--count", "6", "--size", "48", "--seed", "3"]);
    for (name, arch) in [("a.ckpt", "m1"), ("b.ckpt", "m2")] {
        ok(
            dir,
            &[
                "train", "--data", "data", "--out", name, "--arch", arch, "--toy", "--input-size", "16", "--batch",
                "2", "--steps-per-epoch", "2", "--max-steps", "2", "--val-on-train",
            ],
        );
    }
}

#[test]
fn usage_errors_exit_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = forgenet(dir.path(), &["generate", "--out", "x", "--kinds", "copy_move,blur"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");

    let out = forgenet(dir.path(), &["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");

    let out = forgenet(dir.path(), &["evaluate", "--data", "nowhere", "--model", "missing.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_line(&out)["message"].as_str().is_some());
}

#[test]
fn malformed_report_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("r.json"), "{\"dataset\": 3}").unwrap();
    let out = forgenet(dir.path(), &["chart", "--reports", "r.json", "--out", "c.svg"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "input");
    assert!(!dir.path().join("c.svg").exists());
}

#[test]
fn pipeline_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir);

    // evaluating under a profile equals degrading first
    ok(dir, &["evaluate", "--data", "data", "--model", "a.ckpt", "--osn", "wechat-like", "--name", "d", "--out", "on.json"]);
    ok(dir, &["degrade", "--profile", "wechat-like", "--in", "data", "--out", "deg"]);
    ok(dir, &["evaluate", "--data", "deg", "--model", "a.ckpt", "--name", "d", "--out", "off.json"]);
    let on = std::fs::read(dir.join("on.json")).unwrap();
    assert_eq!(on, std::fs::read(dir.join("off.json")).unwrap());
    let report: Value = serde_json::from_slice(&on).unwrap();
    assert_eq!(report["osn_profile"], "wechat-like");
    assert_eq!(report["per_image"].as_array().unwrap().len(), 6);

    // fused prediction writes a mask at the input size
    let img = std::fs::read_dir(dir.join("data/images")).unwrap().next().unwrap().unwrap().path();
    let img = img.to_str().unwrap();
    ok(dir, &["predict", "--model", "a.ckpt", "--model2", "b.ckpt", "--fuse", "avg", "--input", img, "--out", "p.png"]);
    let mask = forgenet_imaging::io::read_gray_png(dir.join("p.png")).unwrap();
    assert_eq!(mask.dims(), (48, 48));

    // ablation prints the sub-models, both rules and the win count
    let table = ok(dir, &["evaluate", "--data", "data", "--model", "a.ckpt", "--model2", "b.ckpt", "--ablation"]);
    for id in ["a", "b", "max(a,b)", "avg(a,b)"] {
        assert!(table.lines().any(|l| l.split_whitespace().nth(1) == Some(id)), "{id}\n{table}");
    }
    assert!(table.contains("fused AUC above both sub-models"));

    ok(dir, &["bench", "--model", "a.ckpt", "--sizes", "16,32", "--repeats", "1", "--out", "t.csv"]);
    let csv = std::fs::read_to_string(dir.join("t.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("strategy,height,width,repeat,seconds"));
    assert_eq!(csv.lines().count(), 5);

    ok(dir, &["chart", "--reports", "on.json", "off.json", "--out", "c.svg"]);
    let svg = std::fs::read_to_string(dir.join("c.svg")).unwrap();
    assert!(svg.contains("wechat-like"));
}
