//! Raw graph construction from a patient record.
//!
//! Structured tables convert to entities deterministically with no LLM:
//! the patient node, diagnoses, triage vitals, and ED department map 1:1.
//! Free text (discharge record, radiology reports) goes through the LLM
//! extraction prompt; its structured output is parsed and retried under the
//! standard budget. Provenance lands on every element.

use super::{EntityType, GraphError, PatientGraph, Provenance, RelationType};
use crate::ingest::PatientRecord;
use crate::llm::{prompts, ChatRequest, LlmClient};
use crate::structured::{
    accept_or_retry, field, FieldKind, SchemaDescriptor, Stage, Strictness, ValidationOutcome,
};
use serde::Deserialize;
use std::collections::BTreeMap;

fn entity_type_names() -> Vec<String> {
    EntityType::ALL.iter().map(|t| t.to_string()).collect()
}

fn relation_type_names() -> Vec<String> {
    RelationType::ALL.iter().map(|t| t.to_string()).collect()
}

/// Output contract for the free-text extraction prompt. The optional `ref`
/// handle lets a relation target one specific entity when names repeat.
pub fn extraction_schema() -> SchemaDescriptor {
    let entity = SchemaDescriptor::new(
        "extracted_entity",
        "v1",
        vec![
            field("etype", FieldKind::Enum { allowed: entity_type_names() }, true),
            field("name", FieldKind::String, true),
            field("attributes", FieldKind::Map, false),
            field("ref", FieldKind::String, false),
        ],
    );
    let relation = SchemaDescriptor::new(
        "extracted_relation",
        "v1",
        vec![
            field("src_etype", FieldKind::Enum { allowed: entity_type_names() }, true),
            field("src", FieldKind::String, true),
            field("rtype", FieldKind::Enum { allowed: relation_type_names() }, true),
            field("dst_etype", FieldKind::Enum { allowed: entity_type_names() }, true),
            field("dst", FieldKind::String, true),
        ],
    );
    SchemaDescriptor::new(
        "graph_extraction",
        "v1",
        vec![
            field(
                "entities",
                FieldKind::List {
                    item: Box::new(FieldKind::Object { schema: Box::new(entity) }),
                },
                true,
            ),
            field(
                "relations",
                FieldKind::List {
                    item: Box::new(FieldKind::Object { schema: Box::new(relation) }),
                },
                true,
            ),
        ],
    )
}

#[derive(Debug, Deserialize)]
struct RawEntity {
    etype: EntityType,
    name: String,
    #[serde(default)]
    attributes: BTreeMap<String, serde_json::Value>,
    #[serde(default, rename = "ref")]
    ref_handle: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawRelation {
    src_etype: EntityType,
    src: String,
    rtype: RelationType,
    dst_etype: EntityType,
    dst: String,
}

#[derive(Debug, Deserialize)]
struct RawExtraction {
    entities: Vec<RawEntity>,
    relations: Vec<RawRelation>,
}

fn stringify(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Build the unnormalized graph for one patient.
///
/// With `llm = None` only table-derived entities appear; free text is
/// skipped. With a backend, each non-empty free-text source triggers one
/// extraction call under `retry_budget` total attempts; output that never
/// parses is a [`GraphError::Schema`].
pub fn extract_raw_graph(
    record: &PatientRecord,
    llm: Option<&LlmClient>,
    retry_budget: u32,
) -> Result<PatientGraph, GraphError> {
    let started = std::time::Instant::now();
    let mut graph = PatientGraph::new(&record.patient_id);

    // patient anchor node
    let mut patient_attrs = BTreeMap::new();
    patient_attrs.insert("patient_id".to_string(), record.patient_id.clone());
    let patient = graph.add_entity(
        EntityType::Patient,
        "Patient",
        patient_attrs,
        Provenance::new("discharge_target", 0),
    );

    // diagnoses map 1:1
    for (i, d) in record.diagnoses.iter().enumerate() {
        let name = if d.label.trim().is_empty() { d.code.clone() } else { d.label.clone() };
        let mut attrs = BTreeMap::new();
        attrs.insert("code".to_string(), d.code.clone());
        attrs.insert("seq".to_string(), d.seq.to_string());
        let id = graph.add_entity(
            EntityType::Diagnosis,
            &name,
            attrs,
            Provenance::new("diagnosis", i),
        );
        graph.add_relation(
            &patient,
            &id,
            RelationType::HasDiagnosis,
            Provenance::new("diagnosis", i),
        );
    }

    // triage vitals map 1:1
    let vitals: [(&str, Option<String>, &str); 7] = [
        ("temperature", record.triage.temperature.map(|v| format!("{v:.1}")), "F"),
        ("heart_rate", record.triage.heart_rate.map(|v| format!("{v:.0}")), "bpm"),
        ("respiratory_rate", record.triage.respiratory_rate.map(|v| format!("{v:.0}")), "/min"),
        ("spo2", record.triage.spo2.map(|v| format!("{v:.0}")), "%"),
        ("dbp", record.triage.dbp.map(|v| format!("{v:.0}")), "mmHg"),
        ("pain", record.triage.pain.map(|v| v.to_string()), ""),
        ("acuity", record.triage.acuity.map(|v| v.to_string()), ""),
    ];
    fn short(p: &str) -> &str {
        match p {
            "temperature" => "Temp",
            "heart_rate" => "HR",
            "respiratory_rate" => "RR",
            "spo2" => "SpO2",
            "dbp" => "DBP",
            "pain" => "Pain",
            "acuity" => "Acuity",
            other => other,
        }
    }
    for (param, value, unit) in vitals {
        if let Some(v) = value {
            let mut attrs = BTreeMap::new();
            attrs.insert("parameter".to_string(), param.to_string());
            attrs.insert("value".to_string(), v.clone());
            if !unit.is_empty() {
                attrs.insert("unit".to_string(), unit.to_string());
            }
            let id = graph.add_entity(
                EntityType::VitalSign,
                &format!("{} {v}", short(param)),
                attrs,
                Provenance::new("triage", 0),
            );
            graph.add_relation(
                &patient,
                &id,
                RelationType::HasVitalSign,
                Provenance::new("triage", 0),
            );
        }
    }

    // ED stays: one Emergency department node, one visit edge per stay
    if !record.ed_stays.is_empty() {
        let dept = graph.add_entity(
            EntityType::Department,
            "Emergency",
            BTreeMap::new(),
            Provenance::new("edstays", 0),
        );
        for (i, _stay) in record.ed_stays.iter().enumerate() {
            graph.add_relation(
                &patient,
                &dept,
                RelationType::TreatedIn,
                Provenance::new("edstays", i),
            );
        }
    }

    // free-text extraction
    if let Some(client) = llm {
        let mut sources: Vec<(String, usize, &str)> = Vec::new();
        if !record.discharge_text.trim().is_empty() {
            sources.push(("discharge".to_string(), 0, record.discharge_text.as_str()));
        }
        for (i, report) in record.radiology_reports.iter().enumerate() {
            if !report.trim().is_empty() {
                sources.push(("radiology".to_string(), i, report.as_str()));
            }
        }
        let schema = extraction_schema();
        for (table, row, text) in sources {
            extract_free_text(&mut graph, client, &schema, &table, row, text, retry_budget)?;
        }
    }

    graph.quality = super::quality_report(&graph);
    graph.quality.build_seconds = started.elapsed().as_secs_f64();
    Ok(graph)
}

fn extract_free_text(
    graph: &mut PatientGraph,
    client: &LlmClient,
    schema: &SchemaDescriptor,
    table: &str,
    row: usize,
    text: &str,
    retry_budget: u32,
) -> Result<(), GraphError> {
    let prompt = prompts::GRAPH_EXTRACT.render(&[
        ("patient_id", graph.patient_id.as_str()),
        ("source", table),
        ("text", text),
    ]);
    let request = ChatRequest::new(&prompts::GRAPH_EXTRACT.asset_ref(), prompt, 0.0)
        .tag("stage", "extract")
        .tag("patient_id", &graph.patient_id)
        .tag("source", table);

    let first = client.complete(&request)?;
    let report = accept_or_retry::<RawExtraction, _, _>(
        first,
        || client.complete(&request),
        schema,
        Strictness::Strict,
        |_| ValidationOutcome::ok(Stage::Consistency),
        retry_budget,
    )?;

    let extraction = match (report.accepted, report.value) {
        (true, Some(v)) => v,
        _ => {
            let summary: Vec<String> = report
                .violations
                .iter()
                .map(|v| format!("{}: {}", v.rule_id, v.message))
                .collect();
            return Err(GraphError::Schema(summary.join("; ")));
        }
    };

    // entities first, remembering ref handles for relation resolution
    let mut handles: BTreeMap<String, String> = BTreeMap::new();
    for raw in &extraction.entities {
        let attrs: BTreeMap<String, String> = raw
            .attributes
            .iter()
            .map(|(k, v)| (k.clone(), stringify(v)))
            .collect();
        let id = graph.add_entity(raw.etype, raw.name.trim(), attrs, Provenance::new(table, row));
        if let Some(handle) = &raw.ref_handle {
            handles.insert(handle.clone(), id);
        }
    }

    // relations resolve by ref handle first, then first (type, name) match
    for raw in &extraction.relations {
        let src = handles
            .get(&raw.src)
            .cloned()
            .or_else(|| graph.find_entity(raw.src_etype, raw.src.trim()).map(|e| e.id.clone()));
        let dst = handles
            .get(&raw.dst)
            .cloned()
            .or_else(|| graph.find_entity(raw.dst_etype, raw.dst.trim()).map(|e| e.id.clone()));
        match (src, dst) {
            (Some(s), Some(d)) => {
                graph.add_relation(&s, &d, raw.rtype, Provenance::new(table, row))
            }
            _ => log::warn!(
                "dropping relation {} -{}-> {}: unresolved endpoint",
                raw.src,
                raw.rtype,
                raw.dst
            ),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{DiagnosisRow, TriageVitals};
    use crate::llm::{ScenarioEntry, ScriptedMock};

    fn record(discharge: &str, radiology: Vec<String>) -> PatientRecord {
        PatientRecord {
            patient_id: "P0001".into(),
            diagnoses: vec![DiagnosisRow {
                code: "J18.9".into(),
                label: "pneumonia".into(),
                seq: 1,
            }],
            discharge_text: discharge.into(),
            target_text: "Patient diagnosed with pneumonia.".into(),
            discharge_instructions: String::new(),
            ed_stays: Vec::new(),
            radiology_reports: radiology,
            triage: TriageVitals {
                temperature: Some(98.6),
                ..TriageVitals::default()
            },
        }
    }

    #[test]
    fn tables_only_when_no_llm() {
        let graph = extract_raw_graph(&record("some text", vec![]), None, 3).unwrap();
        // patient + diagnosis + one vital
        assert_eq!(graph.entities.len(), 3);
        assert_eq!(graph.quality.patient_entities, 1);
        assert_eq!(graph.connected_components(), 1);
    }

    #[test]
    fn empty_free_text_never_calls_the_llm() {
        let client = LlmClient::mock(ScriptedMock::new(vec![], true));
        let graph = extract_raw_graph(&record("", vec![]), Some(&client), 3).unwrap();
        assert_eq!(graph.entities.len(), 3);
        assert!(client.logs().is_empty());
    }

    #[test]
    fn scripted_extraction_adds_entities_and_relations() {
        let response = serde_json::json!({
            "entities": [
                {"etype": "MEDICATION", "name": "azithromycin", "attributes": {"dose": "500 mg"}},
                {"etype": "SYMPTOM", "name": "productive cough"}
            ],
            "relations": [
                {"src_etype": "PATIENT", "src": "Patient", "rtype": "prescribed",
                 "dst_etype": "MEDICATION", "dst": "azithromycin"}
            ]
        })
        .to_string();
        let client = LlmClient::mock(ScriptedMock::new(
            vec![ScenarioEntry {
                stage: "extract".into(),
                matcher: "".into(),
                responses: vec![response],
                repeat_last: false,
            }],
            true,
        ));
        let graph = extract_raw_graph(&record("Started azithromycin.", vec![]), Some(&client), 3).unwrap();
        assert!(graph.find_entity(EntityType::Medication, "azithromycin").is_some());
        let med = graph.find_entity(EntityType::Medication, "azithromycin").unwrap();
        assert_eq!(med.attributes.get("dose").unwrap(), "500 mg");
        assert!(graph
            .relations
            .iter()
            .any(|r| r.rtype == RelationType::Prescribed));
    }

    #[test]
    fn malformed_output_three_times_is_a_schema_error() {
        let client = LlmClient::mock(ScriptedMock::new(
            vec![ScenarioEntry {
                stage: "extract".into(),
                matcher: "".into(),
                responses: vec!["junk".into(), "more junk".into(), "still junk".into()],
                repeat_last: false,
            }],
            true,
        ));
        match extract_raw_graph(&record("text", vec![]), Some(&client), 3) {
            Err(GraphError::Schema(_)) => {}
            other => panic!("expected Schema error, got {other:?}"),
        }
    }
}
