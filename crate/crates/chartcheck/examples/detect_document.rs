//! Judge a rewritten document sentence by sentence against a patient
//! graph, with a scripted judge emitting conflicts for the injected errors.
//!
//! ```bash
//! cargo run --example detect_document
//! ```

use chartcheck::config::{AppConfig, GraphConfig};
use chartcheck::detect::detect_document;
use chartcheck::graph::{extract_raw_graph, full_normalize};
use chartcheck::ingest::{generate_fixture_from, load_bundle};
use chartcheck::llm::{LlmClient, ScenarioEntry, ScriptedMock};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    generate_fixture_from(42, 1, 201, dir.path())?;
    let record = load_bundle(dir.path(), "P0201")?;
    let graph_cfg = GraphConfig::default();
    let raw = extract_raw_graph(&record, None, 3)?;
    let graph = full_normalize(raw, &graph_cfg.panel_map, &graph_cfg.synonym_map)?;

    // the document under review carries two injected errors
    let rewritten = record
        .target_text
        .replace("pneumonia", "tuberculosis")
        .replace("azithromycin", "clarithromycin");
    println!("document under review:\n{rewritten}\n");

    let conflict = |htype: &str| {
        serde_json::json!({
            "reasoning": format!("The claim contradicts the recorded fact [ent:chart-anchor] ({htype})."),
            "hallucination_status": true,
            "hallucination_types": [htype],
            "signals": {"conflict": 1, "support": 0.1, "explicit": 1},
            "evidence_grade": "E4",
            "confidence": 0.96
        })
        .to_string()
    };
    let supported = serde_json::json!({
        "reasoning": "The statement matches the structured record.",
        "hallucination_status": false,
        "hallucination_types": [],
        "signals": {"conflict": 0, "support": 0.9, "explicit": 1},
        "evidence_grade": "E1"
    })
    .to_string();

    let client = LlmClient::mock(ScriptedMock::new(
        vec![
            ScenarioEntry {
                stage: "detect".into(),
                matcher: "tuberculosis".into(),
                responses: vec![conflict("diagnosis_error")],
                repeat_last: true,
            },
            ScenarioEntry {
                stage: "detect".into(),
                matcher: "clarithromycin".into(),
                responses: vec![conflict("medication_error")],
                repeat_last: true,
            },
            ScenarioEntry {
                stage: "detect".into(),
                matcher: "".into(),
                responses: vec![supported],
                repeat_last: true,
            },
        ],
        true,
    ));

    let cfg = AppConfig::default();
    let outcomes = detect_document(&rewritten, &graph, &client, &cfg);
    println!("sentence-level verdicts:");
    for outcome in &outcomes {
        match outcome.as_detected() {
            Some(r) => {
                let types: Vec<String> = r.htypes.iter().map(|t| t.to_string()).collect();
                println!(
                    "  [{}] y={} grade={} types=[{}] retries={}",
                    r.sentence_index,
                    r.hallucination_status,
                    r.grade,
                    types.join(", "),
                    r.retries_used
                );
            }
            None => println!("  [{}] failed", outcome.sentence_index()),
        }
    }
    Ok(())
}
