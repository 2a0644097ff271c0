//! Versioned prompt templates.
//!
//! Templates are compiled-in text assets referenced by id and version in
//! output files, so runs record exactly which prompt produced them.
//! Placeholders use `{name}` and are substituted literally.

pub struct PromptAsset {
    pub id: &'static str,
    pub version: &'static str,
    pub template: &'static str,
}

impl PromptAsset {
    pub fn asset_ref(&self) -> String {
        format!("{}@{}", self.id, self.version)
    }

    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = self.template.to_string();
        for (key, value) in vars {
            out = out.replace(&format!("{{{key}}}"), value);
        }
        out
    }
}

/// Entity/relation extraction from clinical free text.
pub const GRAPH_EXTRACT: PromptAsset = PromptAsset {
    id: "graph_extract",
    version: "v1",
    template: r#"You are building a knowledge graph for a single patient ({patient_id}).
Read the clinical text below and extract every clinical entity and relation.

Entity types: PATIENT, DIAGNOSIS, MEDICATION, LAB_TEST, LAB_RESULT, VITAL_SIGN, SYMPTOM, PROCEDURE, DEPARTMENT.
Relation types: has_diagnosis, prescribed, shows, underwent, has_vital_sign, tested_by, result_of, treated_in, indicates, contraindicated_with.

Respond with exactly one JSON object:
{"entities": [{"etype": "...", "name": "...", "attributes": {"key": "value"}}],
 "relations": [{"src_etype": "...", "src": "...", "rtype": "...", "dst_etype": "...", "dst": "..."}]}

Text ({source}):
{text}"#,
};

/// Stage-1 filter: is this sentence suitable for error injection?
pub const APPLICABILITY: PromptAsset = PromptAsset {
    id: "applicability",
    version: "v1",
    template: r#"Assess whether the sentence below is suitable for a controlled factual rewrite.

Criteria:
- has_verifiable_fact: it states a checkable medical fact (diagnosis, medication, lab value, vital sign), not demographics or subjective feeling.
- plausibly_rewritable: a rewrite could stay medically plausible.
- moderate_complexity: neither trivial ("patient admitted") nor too tangled to control.

Respond with exactly one JSON object:
{"has_verifiable_fact": true|false, "plausibly_rewritable": true|false, "moderate_complexity": true|false, "rationale": "..."}

Sentence: {sentence}"#,
};

/// Stage-2 rewrite: inject one typed error into a sentence.
pub const REWRITE: PromptAsset = PromptAsset {
    id: "rewrite",
    version: "v1",
    template: r#"Rewrite the sentence below to introduce exactly one error of type {htype} ({type_definition}).
The rewrite must stay a single sentence, remain medically plausible, and contradict the patient evidence supplied.
For invented_fact, instead produce one new plausible claim with no basis in the evidence.

Respond with exactly one JSON object:
{"hallucinated_text": "...", "explanation": "...", "evidence_excerpt": "..."}

Patient evidence:
{evidence}

Sentence: {sentence}"#,
};

/// Sentence-level judgment against retrieved graph evidence.
pub const DETECT: PromptAsset = PromptAsset {
    id: "detect_sentence",
    version: "v1",
    template: r#"Judge the sentence against the patient evidence context. Reason in four steps:
1. compare the key claims in the sentence with the evidence;
2. decide hallucination_status (true if any claim is wrong or unsupported);
3. if positive, name the applicable error types;
4. report signals and the evidence grade.

Signals: conflict (1 if the sentence directly contradicts evidence), support (0..1 evidence support strength), explicit (1 if support comes from explicit records).
Grades: E4 conflict; E3 no support; E2 indirect support; E1 explicit support.
When you assign E4, cite the conflicting entity inline in the reasoning using its bracketed id, e.g. [ent:ab12cd34ef567890]. When you assign E3, do not cite any [ent:...] marker.

Respond with exactly one JSON object:
{"reasoning": "...", "hallucination_status": true|false, "hallucination_types": ["..."], "signals": {"conflict": 0|1, "support": 0.0, "explicit": 0|1}, "evidence_grade": "E1|E2|E3|E4", "confidence": 0.0}

Evidence context:
{context}

Sentence {index}: {sentence}"#,
};

/// Community summary generation.
pub const COMMUNITY_SUMMARY: PromptAsset = PromptAsset {
    id: "community_summary",
    version: "v1",
    template: r#"Summarize in one or two sentences what this group of clinical entities has in common for the patient record.

Entities: {members}

Respond with the summary text only."#,
};

/// All shipped assets, for manifest version stamping.
pub fn asset_versions() -> Vec<(String, String)> {
    [
        &GRAPH_EXTRACT,
        &APPLICABILITY,
        &REWRITE,
        &DETECT,
        &COMMUNITY_SUMMARY,
    ]
    .iter()
    .map(|a| (a.id.to_string(), a.version.to_string()))
    .collect()
}
