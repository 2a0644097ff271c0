//! End-to-end CLI contract: exit codes, stage wiring, and error surfacing.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chartcheck"))
}

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bundle")
}

#[test]
fn missing_required_flag_exits_2() {
    let output = bin().args(["detect", "--doc", "x.txt", "--out", "y.jsonl"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("--graph"), "usage error names the flag: {stderr}");
}

#[test]
fn unknown_subcommand_exits_2() {
    let output = bin().arg("frobnicate").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn ingest_reports_the_shipped_fixture() {
    let output = bin()
        .args(["ingest", "--root"])
        .arg(fixture_dir())
        .args(["--patient", "P0001"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("3 diagnoses"), "unexpected summary: {stdout}");
}

#[test]
fn ingest_missing_patient_exits_1() {
    let output = bin()
        .args(["ingest", "--root"])
        .arg(fixture_dir())
        .args(["--patient", "P9999"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("discharge_target"));
}

fn write_scenario(dir: &Path) -> PathBuf {
    let supported = serde_json::json!({
        "reasoning": "matches the record",
        "hallucination_status": false,
        "hallucination_types": [],
        "signals": {"conflict": 0, "support": 0.9, "explicit": 1},
        "evidence_grade": "E1"
    })
    .to_string();
    let scenario = serde_json::json!([
        {"stage": "detect", "matcher": "", "responses": [supported], "repeat_last": true}
    ]);
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string(&scenario).unwrap()).unwrap();
    path
}

#[test]
fn fixture_graph_detect_evaluate_chain_runs() {
    let dir = tempfile::tempdir().unwrap();
    let bundles = dir.path().join("bundles");

    let status = bin()
        .args(["fixture", "--seed", "5", "--patients", "1", "--out"])
        .arg(&bundles)
        .status()
        .unwrap();
    assert!(status.success());

    let graph_path = dir.path().join("graph.json");
    let status = bin()
        .args(["build-graph", "--root"])
        .arg(&bundles)
        .args(["--patient", "P0001", "--no-llm", "--out"])
        .arg(&graph_path)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(graph_path.exists());

    // retrieve shows a context for a free-form sentence
    let output = bin()
        .args(["retrieve", "--graph"])
        .arg(&graph_path)
        .args(["--sentence", "prescribed warfarin", "--k", "5"])
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("ENTITIES:"));

    // detect the original (un-rewritten) target under a scripted backend
    let scenario = write_scenario(dir.path());
    let doc_path = dir.path().join("doc.txt");
    let target = {
        let record = chartcheck::ingest::load_bundle(&bundles, "P0001").unwrap();
        record.target_text
    };
    std::fs::write(&doc_path, &target).unwrap();
    let detections_path = dir.path().join("detections.jsonl");
    let status = bin()
        .args(["detect", "--graph"])
        .arg(&graph_path)
        .args(["--doc"])
        .arg(&doc_path)
        .args(["--out"])
        .arg(&detections_path)
        .args(["--scenario"])
        .arg(&scenario)
        .status()
        .unwrap();
    assert!(status.success());

    // evaluate against an empty gold set: all negatives, degenerate report
    let gold_path = dir.path().join("samples.jsonl");
    std::fs::write(&gold_path, "").unwrap();
    let report_dir = dir.path().join("report");
    let output = bin()
        .args(["evaluate", "--gold"])
        .arg(&gold_path)
        .args(["--pred"])
        .arg(&detections_path)
        .args(["--out"])
        .arg(&report_dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "evaluate failed: {}", String::from_utf8_lossy(&output.stderr));
    assert!(report_dir.join("metrics.csv").exists());
    assert!(String::from_utf8_lossy(&output.stdout).contains("degenerate"));
}

#[test]
fn evaluate_surfaces_duplicate_gold_keys_with_file_context() {
    let dir = tempfile::tempdir().unwrap();
    let gold_path = dir.path().join("samples.jsonl");
    let sample = serde_json::json!({
        "schema_version": "sample/1",
        "patient_id": "P0001",
        "sentence_index": 1,
        "original_text": "a.",
        "hallucinated_text": "b.",
        "htype": "diagnosis_error",
        "generation_grade": "E4",
        "explanation": "x",
        "evidence_excerpt": "e"
    })
    .to_string();
    std::fs::write(&gold_path, format!("{sample}\n{sample}\n")).unwrap();

    let pred_path = dir.path().join("detections.jsonl");
    std::fs::write(&pred_path, "").unwrap();

    let output = bin()
        .args(["evaluate", "--gold"])
        .arg(&gold_path)
        .args(["--pred"])
        .arg(&pred_path)
        .args(["--out"])
        .arg(dir.path().join("report"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("duplicate"), "stderr: {stderr}");
    assert!(stderr.contains("samples.jsonl"), "names the offending file: {stderr}");
    assert!(stderr.contains("line 2"), "points at the duplicate line: {stderr}");
}

#[test]
fn pipeline_rejects_overlapping_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        r#"
[pipeline]
data_root = "{root}"
out_dir = "{out}"
patients = [201, 202]
train_range = [1, 210]
test_range = [201, 250]
fixture_seed = 42
"#,
        root = dir.path().join("bundles").display(),
        out = dir.path().join("run").display(),
    );
    let config_path = dir.path().join("run.toml");
    std::fs::write(&config_path, config).unwrap();
    let output = bin().args(["pipeline", "--config"]).arg(&config_path).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("overlaps"));
}
