//! The generation stage end to end: segment the target text, assess
//! applicability, sample rewrite targets, inject typed errors through a
//! scripted backend, and splice the rewritten document.
//!
//! ```bash
//! cargo run --example inject_errors
//! ```

use chartcheck::config::GenerationConfig;
use chartcheck::generate::{assess_all, generate_all, rewrite_document, verify_sample};
use chartcheck::ingest::{generate_fixture_from, load_bundle};
use chartcheck::llm::{LlmClient, ScenarioEntry, ScriptedMock};
use chartcheck::segment::segment;

fn applicable(flag: bool) -> String {
    serde_json::json!({
        "has_verifiable_fact": flag,
        "plausibly_rewritable": flag,
        "moderate_complexity": flag,
        "rationale": if flag { "names a checkable fact" } else { "nothing to verify" }
    })
    .to_string()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    generate_fixture_from(42, 1, 201, dir.path())?;
    let record = load_bundle(dir.path(), "P0201")?;
    let units = segment(&record.target_text);
    println!("target text has {} sentences:", units.len());
    for u in &units {
        println!("  [{}] {}", u.index, u.text);
    }

    let scenario = vec![
        ScenarioEntry {
            stage: "applicability".into(),
            matcher: "pneumonia".into(),
            responses: vec![applicable(true)],
            repeat_last: true,
        },
        ScenarioEntry {
            stage: "applicability".into(),
            matcher: "azithromycin".into(),
            responses: vec![applicable(true)],
            repeat_last: true,
        },
        ScenarioEntry {
            stage: "applicability".into(),
            matcher: "".into(),
            responses: vec![applicable(false)],
            repeat_last: true,
        },
        ScenarioEntry {
            stage: "generate".into(),
            matcher: "pneumonia".into(),
            responses: vec![serde_json::json!({
                "hallucinated_text": "Patient diagnosed with tuberculosis.",
                "explanation": "replaced the documented diagnosis",
                "evidence_excerpt": "Diagnosis: J18.9 - pneumonia"
            })
            .to_string()],
            repeat_last: true,
        },
        ScenarioEntry {
            stage: "generate".into(),
            matcher: "azithromycin".into(),
            responses: vec![serde_json::json!({
                "hallucinated_text": "Prescribed clarithromycin 500 mg.",
                "explanation": "swapped the documented antibiotic",
                "evidence_excerpt": "Medication: azithromycin 500 mg"
            })
            .to_string()],
            repeat_last: true,
        },
    ];
    let client = LlmClient::mock(ScriptedMock::new(scenario, true));

    let cfg = GenerationConfig {
        rewrite_ratio: 1.0,
        ..GenerationConfig::default()
    };
    let judgments = assess_all(&units, &client, &record.patient_id, cfg.worker_budget, 3)?;
    let applicable_count = judgments.iter().filter(|j| j.applicable).count();
    println!("\n{applicable_count} of {} sentences judged applicable", units.len());

    let (samples, stats) = generate_all(&units, &judgments, &record, &client, &cfg, 7, 3)?;
    println!("attempted {}, produced {}", stats.attempted, stats.produced);
    for s in &samples {
        let (ok, _) = verify_sample(s);
        println!(
            "  [{}] {} ({}) verified={ok}\n      '{}' -> '{}'",
            s.sentence_index, s.htype, s.generation_grade, s.original_text, s.hallucinated_text
        );
    }

    let outcome = rewrite_document(&record.target_text, &units, &samples)?;
    println!("\nrewritten document:\n{}", outcome.text);
    println!("\ngold labels: {} rows", outcome.gold.len());
    Ok(())
}
