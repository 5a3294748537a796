use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn xmodal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xmodal")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_data(dir: &Path, extra: &[&str]) {
    let mut args = vec!["generate", "--out", p(dir), "--dim", "8", "--n-train", "40", "--n-validation", "14", "--n-test", "14"];
    args.extend_from_slice(extra);
    let o = xmodal(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train", "--data", p(data), "--out", p(out), "--dim", "8", "--heads", "2", "--lr", "1e-3",
    ];
    args.extend_from_slice(extra);
    xmodal(&args)
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for split in ["train", "validation", "test"] {
        for f in ["manifest.jsonl", "features.bin"] {
            out.push((format!("{split}/{f}"), fs::read(dir.join(split).join(f)).unwrap()));
        }
    }
    out.push(("provenance.json".into(), fs::read(dir.join("provenance.json")).unwrap()));
    out
}

#[test]
fn generate_is_deterministic_and_creates_dirs() {
    let tmp = tempdir().unwrap();
    let (a, b) = (tmp.path().join("x/y/a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = xmodal(&["generate", "--seed", "7", "--n-train", "256", "--dim", "16", "--out", p(d)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(tree_bytes(&a), tree_bytes(&b));
    let prov = fs::read_to_string(a.join("provenance.json")).unwrap();
    assert!(prov.contains("\"seed\": 7"));
}

#[test]
fn generate_defaults_to_width_768() {
    let tmp = tempdir().unwrap();
    let o = xmodal(&["generate", "--n-train", "2", "--n-validation", "1", "--n-test", "1", "--out", p(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let header = fs::read_to_string(tmp.path().join("train/manifest.jsonl")).unwrap();
    assert!(header.lines().next().unwrap().contains("\"dim\":768"), "{header}");
}

#[test]
fn invalid_priors_name_the_flag() {
    let tmp = tempdir().unwrap();
    let o = xmodal(&["generate", "--out", p(tmp.path()), "--priors", "0.5,0.5,0.5,0,0,0,0"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--priors"), "{}", stderr(&o));
    let o = xmodal(&["generate", "--out", p(tmp.path()), "--priors", "0.5,0.5"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--priors"));
}

#[test]
fn unknown_flag_is_a_validation_error() {
    let o = xmodal(&["train", "--no-such-flag"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&xmodal(&["--help"])), 0);
}

#[test]
fn help_documents_defaults() {
    let text = stdout(&xmodal(&["train", "--help"]));
    for needle in ["5e-8", "[default: 2]", "[default: 128]", "[default: 768]", "[default: 0.1]", "cross-attention", "inverse-frequency"] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
}

#[test]
fn train_writes_checkpoint_history_and_config() {
    let tmp = tempdir().unwrap();
    let (data, out) = (tmp.path().join("data"), tmp.path().join("run"));
    small_data(&data, &[]);
    let o = train(&data, &out, &["--max-epochs", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["config.json", "history.jsonl", "checkpoint"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let history = fs::read_to_string(out.join("history.jsonl")).unwrap();
    assert!(!history.is_empty() && history.lines().count() <= 3);
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["model"]["text_len"], 3);
    assert_eq!(cfg["model"]["audio_len"], 5);
    assert_eq!(cfg["train"]["learning_rate"], 1e-3);
}

#[test]
fn indivisible_heads_are_rejected() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    small_data(&data, &[]);
    let o = xmodal(&["train", "--data", p(&data), "--out", p(&tmp.path().join("r")), "--heads", "128", "--dim", "100"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("divisible"), "{}", stderr(&o));
}

#[test]
fn dim_mismatch_with_data_is_rejected() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    small_data(&data, &[]);
    let o = xmodal(&["train", "--data", p(&data), "--out", p(&tmp.path().join("r")), "--dim", "16", "--heads", "2"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--dim 8"), "{}", stderr(&o));
}

fn head_input_dim(ckpt: &Path) -> usize {
    let model = xmodal_core::BimodalClassifier::<f32>::load(ckpt).unwrap();
    model.head().in_dim()
}

#[test]
fn fusion_choice_sets_head_width() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    small_data(&data, &[]);
    let (c, x) = (tmp.path().join("concat"), tmp.path().join("cross"));
    assert_eq!(code(&train(&data, &c, &["--fusion", "concat", "--max-epochs", "1"])), 0);
    assert_eq!(code(&train(&data, &x, &["--fusion", "cross-attention", "--max-epochs", "1"])), 0);
    assert_eq!(head_input_dim(&c.join("checkpoint")), (3 + 5) * 8);
    assert_eq!(head_input_dim(&x.join("checkpoint")), 5 * 8);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    small_data(&data, &[]);
    let cfg = tmp.path().join("run.json");
    let out = tmp.path().join("run");
    fs::write(
        &cfg,
        format!(
            r#"{{"model": {{"dim": 8, "num_heads": 4, "fusion": "concat"}}, "train": {{"seed": 9, "max_epochs": 1, "learning_rate": 0.01}}, "data": {:?}, "out": {:?}}}"#,
            p(&data),
            p(&out)
        ),
    )
    .unwrap();
    let o = xmodal(&["train", "--config", p(&cfg), "--seed", "11"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let echoed: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["train"]["seed"], 11);
    assert_eq!(echoed["model"]["num_heads"], 4);
    assert_eq!(echoed["model"]["fusion"], "concat");
}

#[test]
fn evaluate_writes_reports() {
    let tmp = tempdir().unwrap();
    let (data, run, ev) = (tmp.path().join("data"), tmp.path().join("run"), tmp.path().join("eval"));
    small_data(&data, &["--noise", "0.05", "--separation", "3"]);
    assert_eq!(code(&train(&data, &run, &["--max-epochs", "20", "--patience", "20", "--fusion", "concat"])), 0);
    let o = xmodal(&["evaluate", "--checkpoint", p(&run.join("checkpoint")), "--data", p(&data.join("test")), "--out", p(&ev)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(ev.join("report.txt")).unwrap();
    assert!(table.contains("Weighted Avg.") && table.contains("surprise"));
    let csv = fs::read_to_string(ev.join("confusion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    for row in json["per_class"].as_array().unwrap() {
        let (pr, rc, f1) = (row["precision"].as_f64().unwrap(), row["recall"].as_f64().unwrap(), row["f1"].as_f64().unwrap());
        let h = if pr + rc == 0.0 { 0.0 } else { 2.0 * pr * rc / (pr + rc) };
        assert!((f1 - h).abs() < 1e-12);
    }
    assert!(json["weighted"]["f1"].as_f64().unwrap() > 0.9, "{table}");

    let o = xmodal(&["report", "--input", p(&ev.join("report.json"))]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), table);
    let o = xmodal(&["report", "--input", p(&ev.join("report.json")), "--confusion"]);
    assert_eq!(stdout(&o), csv);
}

#[test]
fn evaluate_rejects_mismatched_checkpoint() {
    let tmp = tempdir().unwrap();
    let (data, wide, run) = (tmp.path().join("data"), tmp.path().join("wide"), tmp.path().join("run"));
    small_data(&data, &[]);
    let o = xmodal(&["generate", "--out", p(&wide), "--dim", "16", "--n-train", "4", "--n-validation", "2", "--n-test", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&train(&data, &run, &["--max-epochs", "1"])), 0);
    let o = xmodal(&[
        "evaluate", "--checkpoint", p(&run.join("checkpoint")), "--data", p(&wide.join("test")), "--out", p(&tmp.path().join("e")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("8-dimensional") && stderr(&o).contains("16-dimensional"), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes_and_catches_corruption() {
    let o = xmodal(&["gradcheck", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let out = stdout(&o);
    for name in ["matmul", "multi_head_attention", "model_concat", "model_cross_attention"] {
        assert!(out.contains(name), "{name} missing");
    }
    let o = xmodal(&["gradcheck", "--inject-corrupted"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("corrupted"));
}

#[test]
fn validate_strict_fails_on_synthetic_sizes() {
    let tmp = tempdir().unwrap();
    small_data(tmp.path(), &[]);
    let o = xmodal(&["validate", "--data", p(tmp.path())]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("expected 9988"), "{}", stdout(&o));
    assert_eq!(code(&xmodal(&["validate", "--data", p(tmp.path()), "--strict"])), 1);
}

#[test]
fn missing_dataset_is_reported() {
    let tmp = tempdir().unwrap();
    let o = xmodal(&["train", "--data", p(&tmp.path().join("nope")), "--out", p(&tmp.path().join("r")), "--dim", "8", "--heads", "2"]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("nope"));
}
