//! End-to-end runs of the `recog` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn recog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recog"))
        .args(args)
        .output()
        .expect("spawn recog")
}

fn ok(args: &[&str]) -> String {
    let out = recog(args);
    assert!(
        out.status.success(),
        "recog {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn metrics(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn tar_at(report: &Value, fmr: f64) -> f64 {
    report["tar_at_fmr"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["target_fmr"].as_f64() == Some(fmr))
        .unwrap()["tar"]
        .as_f64()
        .unwrap()
}

fn erc_auc(report: &Value, quality: &str) -> f64 {
    report["erc"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["quality"] == quality)
        .unwrap()["auc"]
        .as_f64()
        .unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Workspace { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Default synthetic dataset plus ground-truth labels.
    fn labeled(&self) -> (PathBuf, PathBuf) {
        let data = self.path("data.tfra");
        let labels = self.path("labels.csv");
        ok(&["synth", "--output", s(&data)]);
        ok(&["label", "--input", s(&data), "--output", s(&labels)]);
        (data, labels)
    }
}

#[test]
fn ground_truth_quality_lowers_erc_area() {
    let ws = Workspace::new();
    let (data, labels) = ws.labeled();
    let out = ws.path("erc.json");
    let text = ok(&[
        "erc",
        "--input",
        s(&data),
        "--labels",
        s(&labels),
        "--quality",
        "gt_ccs",
        "--quality",
        "constant",
        "--target-fmr",
        "0.01",
        "--output",
        s(&out),
    ]);
    assert!(text.contains("gt_ccs"));
    let report = metrics(&out);
    assert!(erc_auc(&report, "gt_ccs") < erc_auc(&report, "constant"));
    assert!(ws.path("erc.json.txt").exists());
    assert!(ws.path("erc.json.run.toml").exists());
}

#[test]
fn filtering_and_weighting_beat_plain_averaging() {
    let ws = Workspace::new();
    let (data, labels) = ws.labeled();
    let mut tars = Vec::new();
    for policy in ["average", "ccas_filter_plus_ccs_weight"] {
        let templates = ws.path(&format!("{policy}.tfra"));
        let out = ws.path(&format!("{policy}.json"));
        ok(&[
            "aggregate",
            "--input",
            s(&data),
            "--labels",
            s(&labels),
            "--score",
            "gt",
            "--policy",
            policy,
            "--output",
            s(&templates),
        ]);
        assert!(ws.path(&format!("{policy}.tfra.templates.csv")).exists());
        ok(&["evaluate", "--input", s(&templates), "--output", s(&out)]);
        tars.push(tar_at(&metrics(&out), 1e-3));
    }
    assert!(tars[1] >= tars[0], "{tars:?}");
}

#[test]
fn report_on_empty_directory_fails_with_stage() {
    let ws = Workspace::new();
    let empty = ws.path("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = recog(&["report", "--input", s(&empty)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: report:"), "{err}");
}

#[test]
fn missing_input_names_the_stage() {
    let ws = Workspace::new();
    let out = recog(&[
        "label",
        "--input",
        s(&ws.path("nope.tfra")),
        "--output",
        s(&ws.path("l.csv")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("label:"));
}

fn small_pipeline(ws: &Workspace, threads: &str) -> Vec<Vec<u8>> {
    let data = ws.path("d.tfra");
    let labels = ws.path("l.csv");
    let head = ws.path("h.tfrh");
    let preds = ws.path("p.csv");
    let templates = ws.path("t.tfra");
    let metrics = ws.path("m.json");
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_recog"))
            .args(args)
            .env("RECOG_THREADS", threads)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run(&[
        "synth",
        "--num-classes",
        "30",
        "--dim",
        "16",
        "--output",
        s(&data),
    ]);
    run(&["label", "--input", s(&data), "--output", s(&labels)]);
    run(&["calibrate", "--input", s(&labels), "--output", s(&labels)]);
    run(&[
        "train",
        "--input",
        s(&data),
        "--labels",
        s(&labels),
        "--calibrated",
        "--epochs",
        "3",
        "--output",
        s(&head),
    ]);
    run(&[
        "predict",
        "--input",
        s(&data),
        "--head",
        s(&head),
        "--output",
        s(&preds),
    ]);
    run(&[
        "aggregate",
        "--input",
        s(&data),
        "--predictions",
        s(&preds),
        "--policy",
        "calibrated_ccas_filter_plus_weight",
        "--output",
        s(&templates),
    ]);
    run(&[
        "evaluate",
        "--input",
        s(&data),
        "--labels",
        s(&labels),
        "--predictions",
        s(&preds),
        "--quality",
        "pred_calibrated_ccas",
        "--output",
        s(&metrics),
    ]);
    [&data, &labels, &head, &preds, &templates, &metrics]
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect()
}

#[test]
fn pipeline_is_deterministic_across_runs_and_thread_counts() {
    let ws = Workspace::new();
    let a = small_pipeline(&ws, "1");
    let b = small_pipeline(&ws, "4");
    assert_eq!(a, b);
}

#[test]
fn config_echo_reproduces_the_run() {
    let ws = Workspace::new();
    let first = ws.path("a.tfra");
    ok(&[
        "synth",
        "--saturation",
        "--num-classes",
        "12",
        "--seed",
        "5",
        "--output",
        s(&first),
    ]);
    let echo = ws.path("a.tfra.run.toml");
    let text = std::fs::read_to_string(&echo).unwrap();
    assert!(text.contains("saturation_mode = true"));
    let second = ws.path("b.tfra");
    ok(&["synth", "--config", s(&echo), "--output", s(&second)]);
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap()
    );
}

#[test]
fn unknown_config_keys_are_rejected() {
    let ws = Workspace::new();
    let cfg = ws.path("bad.toml");
    std::fs::write(&cfg, "num_clases = 3\n").unwrap();
    let out = recog(&[
        "synth",
        "--config",
        s(&cfg),
        "--output",
        s(&ws.path("x.tfra")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn remap_numbers_string_identities() {
    let ws = Workspace::new();
    let input = ws.path("named.csv");
    std::fs::write(
        &input,
        "subject,sample,role,v0,v1\nbob,img2,probe,0.0,1.0\nalice,img1,gallery,1.0,0.0\nbob,img3,gallery,0.5,0.5\n",
    )
    .unwrap();
    let out = ws.path("named.tfra");
    ok(&["remap", "--input", s(&input), "--output", s(&out)]);
    let mapping = std::fs::read_to_string(ws.path("named.tfra.mapping.csv")).unwrap();
    assert!(mapping.contains("alice"));
    let labels = ws.path("named_labels.csv");
    ok(&["label", "--input", s(&out), "--output", s(&labels)]);
}

#[test]
fn erc_without_quality_is_an_error() {
    let ws = Workspace::new();
    let data = ws.path("d.tfra");
    ok(&["synth", "--num-classes", "10", "--output", s(&data)]);
    let out = recog(&[
        "erc",
        "--input",
        s(&data),
        "--output",
        s(&ws.path("e.json")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("erc:"));
}
