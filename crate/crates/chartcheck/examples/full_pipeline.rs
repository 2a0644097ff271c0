//! The whole five-stage run: fixture data, graphs, error injection,
//! detection, evaluation — fully scripted, no network, reproducible.
//!
//! Runs the pipeline twice into the same directory to show the second run
//! skipping every stage off the content-addressed manifest.
//!
//! ```bash
//! cargo run --example full_pipeline
//! ```

use chartcheck::config::{AppConfig, BackendKind};
use chartcheck::llm::ScenarioEntry;
use chartcheck::pipeline::{run_pipeline, PipelineConfig, PipelineSection};

fn applicable(flag: bool) -> String {
    serde_json::json!({
        "has_verifiable_fact": flag,
        "plausibly_rewritable": flag,
        "moderate_complexity": flag,
        "rationale": "scripted"
    })
    .to_string()
}

fn scenario() -> Vec<ScenarioEntry> {
    let rewrite = |text: &str, excerpt: &str| {
        serde_json::json!({
            "hallucinated_text": text,
            "explanation": "swapped the documented fact",
            "evidence_excerpt": excerpt
        })
        .to_string()
    };
    let conflict = |htype: &str| {
        serde_json::json!({
            "reasoning": "Contradicts the recorded evidence [ent:chart-anchor].",
            "hallucination_status": true,
            "hallucination_types": [htype],
            "signals": {"conflict": 1, "support": 0.1, "explicit": 1},
            "evidence_grade": "E4"
        })
        .to_string()
    };
    let supported = serde_json::json!({
        "reasoning": "Matches the structured record.",
        "hallucination_status": false,
        "hallucination_types": [],
        "signals": {"conflict": 0, "support": 0.9, "explicit": 1},
        "evidence_grade": "E1"
    })
    .to_string();

    vec![
        ScenarioEntry { stage: "applicability".into(), matcher: "Patient diagnosed with pneumonia.".into(), responses: vec![applicable(true)], repeat_last: true },
        ScenarioEntry { stage: "applicability".into(), matcher: "Prescribed azithromycin 500 mg.".into(), responses: vec![applicable(true)], repeat_last: true },
        ScenarioEntry { stage: "applicability".into(), matcher: "".into(), responses: vec![applicable(false)], repeat_last: true },
        ScenarioEntry { stage: "generate".into(), matcher: "Patient diagnosed with pneumonia.".into(), responses: vec![rewrite("Patient diagnosed with tuberculosis.", "Diagnosis: J18.9 - pneumonia")], repeat_last: true },
        ScenarioEntry { stage: "generate".into(), matcher: "Prescribed azithromycin 500 mg.".into(), responses: vec![rewrite("Prescribed clarithromycin 500 mg.", "Medication: azithromycin 500 mg")], repeat_last: true },
        ScenarioEntry { stage: "detect".into(), matcher: "tuberculosis".into(), responses: vec![conflict("diagnosis_error")], repeat_last: true },
        ScenarioEntry { stage: "detect".into(), matcher: "clarithromycin".into(), responses: vec![conflict("medication_error")], repeat_last: true },
        ScenarioEntry { stage: "detect".into(), matcher: "".into(), responses: vec![supported], repeat_last: true },
    ]
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let scenario_path = dir.path().join("scenario.json");
    std::fs::write(&scenario_path, serde_json::to_string_pretty(&scenario())?)?;

    let mut app = AppConfig::default();
    app.backend.kind = BackendKind::Mock;
    app.backend.scenario_path = Some(scenario_path.to_string_lossy().to_string());
    app.generation.rewrite_ratio = 1.0;

    let config = PipelineConfig {
        pipeline: PipelineSection {
            data_root: dir.path().join("bundles").to_string_lossy().to_string(),
            out_dir: dir.path().join("run").to_string_lossy().to_string(),
            patients: [201, 205],
            train_range: [1, 200],
            validation_fraction: 0.05,
            test_range: [201, 250],
            fixture_seed: Some(42),
            sample_seed: 7,
            graph_use_llm: false,
        },
        app,
    };

    let manifest = run_pipeline(&config)?;
    println!("first run:");
    for stage in &manifest.stages {
        println!(
            "  {:<12} {:<6} {} ({} outputs, {} ms)",
            stage.stage,
            stage.patient.as_deref().unwrap_or("-"),
            stage.status,
            stage.outputs.len(),
            stage.duration_ms
        );
    }
    println!("  manifest digest: {}", &manifest.manifest_digest[..16]);

    let again = run_pipeline(&config)?;
    let skipped = again.stages.iter().filter(|s| s.status == "skipped").count();
    println!("\nsecond run: {skipped}/{} stages skipped", again.stages.len());
    println!("  digests match: {}", again.manifest_digest == manifest.manifest_digest);

    let metrics = std::fs::read_to_string(dir.path().join("run/report/metrics.csv"))?;
    println!("\nreport/metrics.csv:\n{metrics}");
    Ok(())
}
