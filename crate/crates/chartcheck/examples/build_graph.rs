//! Build a patient graph with scripted free-text extraction, then watch
//! normalization collapse over-extracted lab tests, extra patient nodes,
//! and synonym duplicates.
//!
//! ```bash
//! cargo run --example build_graph
//! ```

use chartcheck::config::GraphConfig;
use chartcheck::graph::{extract_raw_graph, full_normalize, quality_report};
use chartcheck::ingest::{generate_fixture, load_bundle};
use chartcheck::llm::{LlmClient, ScenarioEntry, ScriptedMock};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    generate_fixture(42, 1, dir.path())?;
    let record = load_bundle(dir.path(), "P0001")?;

    // a scripted extraction that over-fragments, as unconstrained prompts do
    let response = serde_json::json!({
        "entities": [
            {"etype": "MEDICATION", "name": "azithromycin", "attributes": {"dose": "500 mg"}},
            {"etype": "MEDICATION", "name": "AZITHROMYCIN"},
            {"etype": "LAB_TEST", "name": "WBC"},
            {"etype": "LAB_TEST", "name": "HGB"},
            {"etype": "LAB_TEST", "name": "HCT"},
            {"etype": "SYMPTOM", "name": "productive cough"},
            {"etype": "PATIENT", "name": "The Patient"}
        ],
        "relations": [
            {"src_etype": "PATIENT", "src": "Patient", "rtype": "prescribed",
             "dst_etype": "MEDICATION", "dst": "azithromycin"},
            {"src_etype": "PATIENT", "src": "The Patient", "rtype": "tested_by",
             "dst_etype": "LAB_TEST", "dst": "WBC"}
        ]
    })
    .to_string();
    let client = LlmClient::mock(ScriptedMock::new(
        vec![ScenarioEntry {
            stage: "extract".into(),
            matcher: "".into(),
            responses: vec![response],
            repeat_last: true,
        }],
        true,
    ));

    let raw = extract_raw_graph(&record, Some(&client), 3)?;
    let before = quality_report(&raw);
    println!(
        "raw graph: {} entities ({} lab tests, {} patients, {} duplicates, {} components)",
        before.total_entities,
        before.lab_test_entities,
        before.patient_entities,
        before.duplicate_entities,
        before.connected_components
    );

    let cfg = GraphConfig::default();
    let graph = full_normalize(raw, &cfg.panel_map, &cfg.synonym_map)?;
    let after = quality_report(&graph);
    println!(
        "normalized: {} entities ({} lab tests, {} patient, {} duplicates, {} component)",
        after.total_entities,
        after.lab_test_entities,
        after.patient_entities,
        after.duplicate_entities,
        after.connected_components
    );

    println!("\nentities:");
    for e in graph.entities.values() {
        println!("  [{}] {} {}", e.id, e.etype, e.canonical_name);
    }
    Ok(())
}
