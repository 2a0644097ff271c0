//! Sentence-level judgment against retrieved evidence.
//!
//! The judge prompt asks for a reasoning trace, the binary verdict, the
//! error types when positive, and three signals: conflict, support
//! strength, and whether support is explicit. The evidence grade is then
//! computed *in code* from those signals by [`grade_evidence`]; the model's
//! self-assigned grade only cross-checks it. A mismatch or any consistency
//! violation triggers a retry; when the budget runs out the last result is
//! retained flagged, never dropped.

use crate::config::AppConfig;
use crate::graph::PatientGraph;
use crate::llm::{prompts, ChatRequest, LlmClient, LlmError};
use crate::retrieval::{retrieve_context, EvidenceContext};
use crate::segment::{segment, SentenceUnit};
use crate::structured::{
    accept_or_retry, check_consistency, field, FieldKind, SchemaDescriptor, Stage, Strictness,
    ValidationOutcome, Violation,
};
pub use crate::taxonomy::EvidenceGrade;
use crate::taxonomy::HallucinationType;
use crate::util::{parallel_map_ordered, short_sha};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("llm: {0}")]
    Llm(#[from] LlmError),
    #[error("judge output unusable after retries: {0}")]
    Schema(String),
    #[error("retrieval: {0}")]
    Retrieval(#[from] crate::retrieval::RetrievalError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
}

/// The three grading signals the judge emits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionSignals {
    /// Sentence directly contradicts the evidence context.
    pub conflict: bool,
    /// Evidence support strength in [0, 1].
    pub support: f64,
    /// Support comes from explicit structured or textual records.
    pub explicit: bool,
}

/// Support threshold separating no-support (E3) from supported (E1/E2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradingConfig {
    pub tau_s: f64,
}

impl Default for GradingConfig {
    fn default() -> Self {
        GradingConfig { tau_s: 0.5 }
    }
}

impl GradingConfig {
    pub fn new(tau_s: f64) -> Self {
        assert!(tau_s > 0.0 && tau_s < 1.0, "tau_s must be in (0, 1)");
        GradingConfig { tau_s }
    }
}

/// The four-branch grading function, evaluated in order:
/// conflict wins (E4); then below-threshold support (E3); then implicit
/// support (E2); then explicit support (E1). Support exactly at the
/// threshold counts as supported.
pub fn grade_evidence(signals: &DetectionSignals, cfg: &GradingConfig) -> EvidenceGrade {
    if signals.conflict {
        EvidenceGrade::E4
    } else if signals.support < cfg.tau_s {
        EvidenceGrade::E3
    } else if !signals.explicit {
        EvidenceGrade::E2
    } else {
        EvidenceGrade::E1
    }
}

/// One judged sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub sentence_index: usize,
    pub sentence_text: String,
    pub hallucination_status: bool,
    pub htypes: BTreeSet<HallucinationType>,
    pub grade: EvidenceGrade,
    pub reasoning: String,
    pub signals: DetectionSignals,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub retries_used: u32,
    pub context_digest: String,
    /// Budget exhausted with violations outstanding; result retained.
    #[serde(default)]
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

/// Per-sentence record in a detection run: judged or failed, never absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SentenceOutcome {
    Detected { result: DetectionResult },
    Failed {
        sentence_index: usize,
        sentence_text: String,
        error_kind: String,
    },
}

impl SentenceOutcome {
    pub fn sentence_index(&self) -> usize {
        match self {
            SentenceOutcome::Detected { result } => result.sentence_index,
            SentenceOutcome::Failed { sentence_index, .. } => *sentence_index,
        }
    }

    pub fn as_detected(&self) -> Option<&DetectionResult> {
        match self {
            SentenceOutcome::Detected { result } => Some(result),
            SentenceOutcome::Failed { .. } => None,
        }
    }
}

fn detection_schema() -> SchemaDescriptor {
    let signals = SchemaDescriptor::new(
        "signals",
        "v1",
        vec![
            field("conflict", FieldKind::Integer { min: Some(0), max: Some(1) }, true),
            field(
                "support",
                FieldKind::Decimal { min: Some(0.0), max: Some(1.0) },
                true,
            ),
            field("explicit", FieldKind::Integer { min: Some(0), max: Some(1) }, true),
        ],
    );
    SchemaDescriptor::new(
        "detection",
        "v1",
        vec![
            field("reasoning", FieldKind::String, true),
            field("hallucination_status", FieldKind::Boolean, true),
            field(
                "hallucination_types",
                FieldKind::List {
                    item: Box::new(FieldKind::Enum {
                        allowed: HallucinationType::ALL.iter().map(|t| t.to_string()).collect(),
                    }),
                },
                false,
            ),
            field("signals", FieldKind::Object { schema: Box::new(signals) }, true),
            field(
                "evidence_grade",
                FieldKind::Enum {
                    allowed: EvidenceGrade::ALL.iter().map(|g| g.to_string()).collect(),
                },
                true,
            ),
            field(
                "confidence",
                FieldKind::Decimal { min: Some(0.0), max: Some(1.0) },
                false,
            ),
        ],
    )
}

#[derive(Debug, Deserialize)]
struct RawSignals {
    conflict: u8,
    support: f64,
    explicit: u8,
}

#[derive(Debug, Deserialize)]
struct RawDetection {
    reasoning: String,
    hallucination_status: bool,
    #[serde(default)]
    hallucination_types: Vec<HallucinationType>,
    signals: RawSignals,
    evidence_grade: EvidenceGrade,
    #[serde(default)]
    confidence: Option<f64>,
}

/// Cross-checks applied to each parsed judgment: the self-assigned grade
/// must match the recomputed one, the four consistency rules must hold,
/// and the type set must agree with the verdict.
fn judge_check(raw: &RawDetection, grading: &GradingConfig) -> ValidationOutcome {
    let signals = DetectionSignals {
        conflict: raw.signals.conflict == 1,
        support: raw.signals.support,
        explicit: raw.signals.explicit == 1,
    };
    let computed = grade_evidence(&signals, grading);
    let mut violations = Vec::new();
    if computed != raw.evidence_grade {
        violations.push(Violation {
            rule_id: "grade_mismatch".into(),
            message: format!(
                "self-assigned grade {} disagrees with recomputed {computed}",
                raw.evidence_grade
            ),
        });
    }
    violations.extend(
        check_consistency(raw.hallucination_status, computed, &raw.reasoning).violations,
    );
    if raw.hallucination_status && raw.hallucination_types.is_empty() {
        violations.push(Violation {
            rule_id: "type_set_missing".into(),
            message: "positive verdict without error types".into(),
        });
    }
    if !raw.hallucination_status && !raw.hallucination_types.is_empty() {
        violations.push(Violation {
            rule_id: "type_set_unexpected".into(),
            message: "negative verdict with error types".into(),
        });
    }
    ValidationOutcome::from_violations(Stage::Consistency, violations)
}

fn build_result(
    raw: RawDetection,
    sentence: &SentenceUnit,
    context: &EvidenceContext,
    grading: &GradingConfig,
    retries_used: u32,
    flagged: bool,
    violations: Vec<String>,
) -> DetectionResult {
    let signals = DetectionSignals {
        conflict: raw.signals.conflict == 1,
        support: raw.signals.support,
        explicit: raw.signals.explicit == 1,
    };
    DetectionResult {
        sentence_index: sentence.index,
        sentence_text: sentence.text.clone(),
        hallucination_status: raw.hallucination_status,
        htypes: raw.hallucination_types.into_iter().collect(),
        grade: grade_evidence(&signals, grading),
        reasoning: raw.reasoning,
        signals,
        confidence: raw.confidence,
        retries_used,
        context_digest: short_sha(&context.rendered_text),
        flagged,
        violations,
    }
}

/// Judge one sentence against its context under the attempt budget.
pub fn detect_sentence(
    sentence: &SentenceUnit,
    context: &EvidenceContext,
    llm: &LlmClient,
    patient_id: &str,
    grading: &GradingConfig,
    strictness: Strictness,
    budget: u32,
) -> Result<DetectionResult, DetectError> {
    let prompt = prompts::DETECT.render(&[
        ("context", context.rendered_text.as_str()),
        ("index", &sentence.index.to_string()),
        ("sentence", sentence.text.as_str()),
    ]);
    let request = ChatRequest::new(&prompts::DETECT.asset_ref(), prompt, 0.0)
        .tag("stage", "detect")
        .tag("patient_id", patient_id)
        .tag("sentence_index", sentence.index);

    let first = llm.complete(&request)?;
    let report = accept_or_retry::<RawDetection, _, _>(
        first,
        || llm.complete(&request),
        &detection_schema(),
        strictness,
        |raw| judge_check(raw, grading),
        budget,
    )?;

    match (report.accepted, report.value) {
        (true, Some(raw)) => Ok(build_result(
            raw,
            sentence,
            context,
            grading,
            report.attempts - 1,
            false,
            Vec::new(),
        )),
        (false, Some(raw)) => {
            // budget exhausted: retain the last result, flagged
            let ids = report.violations.iter().map(|v| v.rule_id.clone()).collect();
            Ok(build_result(raw, sentence, context, grading, budget, true, ids))
        }
        (false, None) => Err(DetectError::Schema(
            report
                .violations
                .iter()
                .map(|v| format!("{}: {}", v.rule_id, v.message))
                .collect::<Vec<_>>()
                .join("; "),
        )),
        (true, None) => unreachable!("accepted reports carry a value"),
    }
}

/// Segment a rewritten document, retrieve per-sentence evidence, and judge
/// every sentence concurrently. Per-sentence failures become `Failed`
/// records; the batch never aborts.
pub fn detect_document(
    text: &str,
    graph: &PatientGraph,
    llm: &LlmClient,
    cfg: &AppConfig,
) -> Vec<SentenceOutcome> {
    let units = segment(text);
    let embedder = crate::retrieval::embedder_from_config(&cfg.retrieval);
    let grading = GradingConfig::new(cfg.detection.tau_s);
    let strictness = if cfg.detection.strict_schema {
        Strictness::Strict
    } else {
        Strictness::Lenient
    };
    let patient_id = graph.patient_id.clone();

    parallel_map_ordered(units, cfg.detection.worker_budget, |_, unit| {
        let context = match retrieve_context(
            &unit.text,
            unit.index,
            graph,
            cfg.retrieval.k,
            embedder.as_ref(),
            cfg.retrieval.context_budget,
        ) {
            Ok(ctx) => ctx,
            Err(e) => {
                return SentenceOutcome::Failed {
                    sentence_index: unit.index,
                    sentence_text: unit.text.clone(),
                    error_kind: format!("retrieval: {e}"),
                }
            }
        };
        match detect_sentence(
            &unit,
            &context,
            llm,
            &patient_id,
            &grading,
            strictness,
            cfg.detection.retry_budget,
        ) {
            Ok(result) => SentenceOutcome::Detected { result },
            Err(DetectError::Llm(e)) => SentenceOutcome::Failed {
                sentence_index: unit.index,
                sentence_text: unit.text.clone(),
                error_kind: format!("llm: {e}"),
            },
            Err(e) => SentenceOutcome::Failed {
                sentence_index: unit.index,
                sentence_text: unit.text.clone(),
                error_kind: format!("schema: {e}"),
            },
        }
    })
}

/// Run metadata stamped at the head of every detection output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionRunMeta {
    pub schema_version: String,
    pub patient_id: String,
    pub model: String,
    pub tau_s: f64,
    pub k: usize,
    pub retry_budget: u32,
    pub prompt_assets: Vec<(String, String)>,
}

impl DetectionRunMeta {
    pub fn new(patient_id: &str, cfg: &AppConfig) -> Self {
        DetectionRunMeta {
            schema_version: "detection/1".to_string(),
            patient_id: patient_id.to_string(),
            model: cfg.backend.model.clone(),
            tau_s: cfg.detection.tau_s,
            k: cfg.retrieval.k,
            retry_budget: cfg.detection.retry_budget,
            prompt_assets: prompts::asset_versions(),
        }
    }
}

// untagged: metadata lines carry schema_version, outcome lines carry the
// SentenceOutcome "kind" tag
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum DetectionLine {
    Metadata(DetectionRunMeta),
    Outcome(SentenceOutcome),
}

/// Write a detection run: one metadata line, then ordered outcome records.
pub fn write_detections(
    path: &std::path::Path,
    meta: &DetectionRunMeta,
    outcomes: &[SentenceOutcome],
) -> Result<(), DetectError> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    writeln!(
        file,
        "{}",
        serde_json::to_string(&DetectionLine::Metadata(meta.clone())).expect("meta serializes")
    )?;
    for outcome in outcomes {
        writeln!(
            file,
            "{}",
            serde_json::to_string(&DetectionLine::Outcome(outcome.clone()))
                .expect("outcome serializes")
        )?;
    }
    Ok(())
}

pub fn read_detections(
    path: &std::path::Path,
) -> Result<(Option<DetectionRunMeta>, Vec<SentenceOutcome>), DetectError> {
    let text = std::fs::read_to_string(path)?;
    let mut meta = None;
    let mut outcomes = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DetectionLine = serde_json::from_str(line)
            .map_err(|e| DetectError::Format(format!("bad detection line: {e}")))?;
        match parsed {
            DetectionLine::Metadata(m) => meta = Some(m),
            DetectionLine::Outcome(o) => outcomes.push(o),
        }
    }
    Ok((meta, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityType, Provenance, RelationType};
    use crate::llm::{ScenarioEntry, ScriptedMock};
    use std::collections::BTreeMap;

    #[test]
    fn grading_follows_the_four_branches() {
        let cfg = GradingConfig::default();
        let g = |c, s, e| {
            grade_evidence(
                &DetectionSignals {
                    conflict: c,
                    support: s,
                    explicit: e,
                },
                &cfg,
            )
        };
        // conflict dominates everything
        assert_eq!(g(true, 0.9, true), EvidenceGrade::E4);
        assert_eq!(g(false, 0.2, false), EvidenceGrade::E3);
        assert_eq!(g(false, 0.8, false), EvidenceGrade::E2);
        assert_eq!(g(false, 0.8, true), EvidenceGrade::E1);
    }

    #[test]
    fn support_at_threshold_is_not_e3() {
        let cfg = GradingConfig::new(0.5);
        let at = DetectionSignals {
            conflict: false,
            support: 0.5,
            explicit: false,
        };
        assert_eq!(grade_evidence(&at, &cfg), EvidenceGrade::E2);
        let below = DetectionSignals {
            support: 0.5 - 1e-9,
            ..at
        };
        assert_eq!(grade_evidence(&below, &cfg), EvidenceGrade::E3);
    }

    fn pneumonia_graph() -> PatientGraph {
        let mut g = PatientGraph::new("P0201");
        let p = g.add_entity(
            EntityType::Patient,
            "Patient",
            BTreeMap::new(),
            Provenance::new("discharge_target", 0),
        );
        let mut attrs = BTreeMap::new();
        attrs.insert("code".to_string(), "J18.9".to_string());
        let dx = g.add_entity(
            EntityType::Diagnosis,
            "pneumonia",
            attrs,
            Provenance::new("diagnosis", 0),
        );
        let mut mattrs = BTreeMap::new();
        mattrs.insert("dose".to_string(), "500 mg".to_string());
        let med = g.add_entity(
            EntityType::Medication,
            "azithromycin",
            mattrs,
            Provenance::new("discharge", 0),
        );
        g.add_relation(&p, &dx, RelationType::HasDiagnosis, Provenance::new("diagnosis", 0));
        g.add_relation(&p, &med, RelationType::Prescribed, Provenance::new("discharge", 0));
        g
    }

    fn conflict_response(types: &str) -> String {
        serde_json::json!({
            "reasoning": format!("The sentence contradicts the recorded fact [ent:{}].", "ab12cd34ef567890"),
            "hallucination_status": true,
            "hallucination_types": [types],
            "signals": {"conflict": 1, "support": 0.1, "explicit": 1},
            "evidence_grade": "E4",
            "confidence": 0.97
        })
        .to_string()
    }

    fn supported_response() -> String {
        serde_json::json!({
            "reasoning": "The sentence matches the recorded diagnosis and medication.",
            "hallucination_status": false,
            "hallucination_types": [],
            "signals": {"conflict": 0, "support": 0.9, "explicit": 1},
            "evidence_grade": "E1"
        })
        .to_string()
    }

    #[test]
    fn rewritten_diagnosis_detects_as_e4() {
        let graph = pneumonia_graph();
        let client = LlmClient::mock(ScriptedMock::new(
            vec![ScenarioEntry {
                stage: "detect".into(),
                matcher: "tuberculosis".into(),
                responses: vec![conflict_response("diagnosis_error")],
                repeat_last: false,
            }],
            true,
        ));
        let cfg = AppConfig::default();
        let outcomes = detect_document(
            "Patient diagnosed with tuberculosis.",
            &graph,
            &client,
            &cfg,
        );
        assert_eq!(outcomes.len(), 1);
        let result = outcomes[0].as_detected().unwrap();
        assert!(result.hallucination_status);
        assert_eq!(result.grade, EvidenceGrade::E4);
        assert!(result.htypes.contains(&HallucinationType::DiagnosisError));
        assert!(!result.flagged);
        assert_eq!(result.retries_used, 0);
    }

    #[test]
    fn supported_sentence_is_a_clean_negative() {
        let graph = pneumonia_graph();
        let client = LlmClient::mock(ScriptedMock::new(
            vec![ScenarioEntry {
                stage: "detect".into(),
                matcher: "".into(),
                responses: vec![supported_response()],
                repeat_last: true,
            }],
            true,
        ));
        let cfg = AppConfig::default();
        let outcomes = detect_document("Patient diagnosed with pneumonia.", &graph, &client, &cfg);
        let result = outcomes[0].as_detected().unwrap();
        assert!(!result.hallucination_status);
        assert_eq!(result.grade, EvidenceGrade::E1);
        assert!(result.htypes.is_empty());
    }

    #[test]
    fn persistent_inconsistency_retains_flagged_last_result() {
        // y=true with signals that grade to E2: rule 1 violation every time
        let bad = serde_json::json!({
            "reasoning": "claims error but support is high",
            "hallucination_status": true,
            "hallucination_types": ["diagnosis_error"],
            "signals": {"conflict": 0, "support": 0.8, "explicit": 0},
            "evidence_grade": "E2"
        })
        .to_string();
        let graph = pneumonia_graph();
        let client = LlmClient::mock(ScriptedMock::new(
            vec![ScenarioEntry {
                stage: "detect".into(),
                matcher: "".into(),
                responses: vec![bad.clone(), bad.clone(), bad],
                repeat_last: false,
            }],
            true,
        ));
        let cfg = AppConfig::default();
        let outcomes = detect_document("Patient diagnosed with pneumonia.", &graph, &client, &cfg);
        let result = outcomes[0].as_detected().unwrap();
        assert!(result.flagged);
        assert_eq!(result.retries_used, 3);
        assert!(result
            .violations
            .iter()
            .any(|v| v == crate::structured::RULE_POSITIVE_GRADE));
        // all three scripted responses consumed
        client.assert_scenario_consumed();
    }

    #[test]
    fn document_of_n_sentences_yields_n_ordered_outcomes() {
        let graph = pneumonia_graph();
        let client = LlmClient::mock(ScriptedMock::new(
            vec![ScenarioEntry {
                stage: "detect".into(),
                matcher: "".into(),
                responses: vec![supported_response()],
                repeat_last: true,
            }],
            true,
        ));
        let cfg = AppConfig::default();
        let doc = "First sentence. Second sentence. Third sentence.";
        let outcomes = detect_document(doc, &graph, &client, &cfg);
        assert_eq!(outcomes.len(), 3);
        for (i, o) in outcomes.iter().enumerate() {
            assert_eq!(o.sentence_index(), i);
        }
        assert!(outcomes.iter().all(|o| !o.as_detected().unwrap().hallucination_status));
    }

    #[test]
    fn llm_failure_becomes_a_per_sentence_record() {
        let graph = pneumonia_graph();
        // scenario with zero entries: every call is unmatched
        let client = LlmClient::mock(ScriptedMock::empty());
        let cfg = AppConfig::default();
        let outcomes = detect_document("One sentence.", &graph, &client, &cfg);
        assert_eq!(outcomes.len(), 1);
        assert!(matches!(outcomes[0], SentenceOutcome::Failed { .. }));
    }

    #[test]
    fn detection_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("detections.jsonl");
        let cfg = AppConfig::default();
        let meta = DetectionRunMeta::new("P0201", &cfg);
        let outcome = SentenceOutcome::Failed {
            sentence_index: 0,
            sentence_text: "x.".into(),
            error_kind: "llm: test".into(),
        };
        write_detections(&path, &meta, std::slice::from_ref(&outcome)).unwrap();
        let (loaded_meta, loaded) = read_detections(&path).unwrap();
        assert_eq!(loaded_meta.unwrap().patient_id, "P0201");
        assert_eq!(loaded, vec![outcome]);
    }
}
