use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ddgen"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let config = serde_json::json!({
        "output_dir": dir.join("out"),
        "corpus": {"synth": {"n_docs": 40, "customer_fraction": 0.8, "seed": 11}},
        "preprocess": {"chunk_size": 96, "min_tail": 24, "seed": 22, "anonymization": null},
        "generator": {"order": 3, "alpha": 0.01, "interp_decay": 0.4},
        "tuning": {
            "n_trials": 2, "seed": 33,
            "weights": {"w_loss": 0.5, "w_bleu": 0.5, "w_rouge": 0.0},
            "eval_chunk_cap": 4, "max_continuation_tokens": 48
        },
        "importance": {"n_trees": 25, "repeats": 3, "seed": 44},
        "assessment": {
            "prompts_path": null, "n_clear": 3, "n_experimental": 3,
            "samples_per_prompt": 2, "seed": 55, "max_tokens": 48,
            "temperature": 0.7, "parse_rate_floor": 0.0, "test_chunk_cap": 4
        }
    });
    let path = dir.join("pipeline.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn repair_with_stdin(input: &str) -> (Option<i32>, String) {
    let mut child = bin()
        .arg("repair")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    (out.status.code(), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn repair_filter_exit_codes() {
    let (code, stdout) = repair_with_stdin("{\"a\": 1}");
    assert_eq!(code, Some(0));
    assert_eq!(stdout.trim(), "{\"a\": 1}");

    let (code, stdout) = repair_with_stdin("{\"a\": 1, \"b\":");
    assert_eq!(code, Some(1));
    assert_eq!(stdout.trim(), "{\"a\": 1}");

    let (code, stdout) = repair_with_stdin("\": 1}");
    assert_eq!(code, Some(2));
    assert_eq!(stdout.trim(), "");
}

#[test]
fn repair_writes_edit_log() {
    let dir = tempfile::tempdir().unwrap();
    let edits = dir.path().join("edits.json");
    let mut child = bin()
        .arg("repair")
        .arg("--edits")
        .arg(&edits)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"[1, {\"x\": [2,")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let log: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&edits).unwrap()).unwrap();
    assert_eq!(log["appended_closers"], "]}]");
}

#[test]
fn validate_reports_offset_and_expectation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"a\": 1,}").unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.starts_with("8:"), "{line}");

    let good = dir.path().join("good.json");
    std::fs::write(&good, "{\"a\": [1, 2.5e3, null]}").unwrap();
    assert_eq!(
        bin().arg("validate").arg(&good).output().unwrap().status.code(),
        Some(0)
    );
}

#[test]
fn downstream_before_upstream_is_a_data_error_naming_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = bin()
        .arg("tune")
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("preprocess"), "{stderr}");
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = bin()
        .args(["synth", "--config"])
        .arg(&config)
        .args(["--set", "preprocess.min_tail=9999"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_run_produces_artifacts_and_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--set", "tuning.n_trials=3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("out");
    for artifact in [
        "corpus/manifest.json",
        "dataset/train.jsonl",
        "model.json",
        "study/trials.csv",
        "importance.json",
        "assessment.json",
        "assessment.md",
        "report.md",
        "manifest.json",
    ] {
        assert!(root.join(artifact).exists(), "{artifact} missing");
    }
    // --set took effect: header line plus 3 trial rows
    let csv = std::fs::read_to_string(root.join("study/trials.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    // generate continues from the trained model
    let out = bin()
        .args(["generate", "--model"])
        .arg(root.join("model.json"))
        .args(["--prompt", "{", "--max-tokens", "16", "--temperature", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with('{'), "{text}");
}

#[test]
fn score_reads_token_array_files() {
    let dir = tempfile::tempdir().unwrap();
    let cand = dir.path().join("cand.json");
    let reference = dir.path().join("ref.json");
    std::fs::write(&cand, "[\"the\", \"cat\", \"sat\"]").unwrap();
    std::fs::write(&reference, "[\"the\", \"cat\", \"slept\"]").unwrap();
    let out = bin()
        .arg("score")
        .arg(&cand)
        .arg(&reference)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let rouge_1 = report["rouge_1_f1"].as_f64().unwrap();
    assert!((rouge_1 - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn version_lists_schema_versions() {
    let out = bin().arg("--version").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("pipeline schema"), "{text}");
    assert!(text.contains("model format"), "{text}");
}
