//! Structured-output reliability: schema binding, extraction/repair, and
//! post-parse semantic validation.
//!
//! Candidate model output flows through a fixed stage order — extraction,
//! repair, parse, schema check, consistency check — and a bounded retry
//! loop. A result is accepted only when every stage passes; when the budget
//! runs out the last candidate is retained with its violation list attached
//! rather than silently dropped.

mod json;

pub use json::{
    extract_json, repair_json, REPAIR_RULESET_VERSION, RULE_BAREWORD, RULE_CLOSE_TRUNCATED,
    RULE_SINGLE_QUOTES, RULE_TRAILING_COMMA,
};

use crate::llm::LlmError;
use crate::taxonomy::EvidenceGrade;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum StructuredError {
    #[error("no balanced JSON object found in model output")]
    NoJsonFound,
    #[error("JSON unrepairable: {0}")]
    UnrepairableJson(String),
}

/// Pipeline stage a validation outcome belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extraction,
    Parse,
    Schema,
    Consistency,
}

/// Result of one validation stage. `ok` holds exactly when `violations`
/// is empty; the constructors keep that true.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub stage: Stage,
    pub ok: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Violation {
    pub rule_id: String,
    pub message: String,
}

impl ValidationOutcome {
    pub fn ok(stage: Stage) -> Self {
        ValidationOutcome {
            stage,
            ok: true,
            violations: Vec::new(),
        }
    }

    pub fn fail(stage: Stage, violations: Vec<Violation>) -> Self {
        assert!(!violations.is_empty(), "a failed outcome needs violations");
        ValidationOutcome {
            stage,
            ok: false,
            violations,
        }
    }

    pub fn from_violations(stage: Stage, violations: Vec<Violation>) -> Self {
        ValidationOutcome {
            stage,
            ok: violations.is_empty(),
            violations,
        }
    }
}

fn violation(rule_id: &str, message: impl Into<String>) -> Violation {
    Violation {
        rule_id: rule_id.to_string(),
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// Schema descriptors
// ---------------------------------------------------------------------------

/// Field type in a schema, with value constraints.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    String,
    Boolean,
    Decimal { min: Option<f64>, max: Option<f64> },
    Integer { min: Option<i64>, max: Option<i64> },
    Enum { allowed: Vec<String> },
    List { item: Box<FieldKind> },
    Object { schema: Box<SchemaDescriptor> },
    /// Free-form string-keyed map with scalar values.
    Map,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    pub required: bool,
}

/// A strongly-typed output contract for one LLM task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaDescriptor {
    pub name: String,
    pub version: String,
    pub fields: Vec<FieldSpec>,
}

impl SchemaDescriptor {
    pub fn new(name: &str, version: &str, fields: Vec<FieldSpec>) -> Self {
        let mut seen = std::collections::BTreeSet::new();
        for f in &fields {
            assert!(seen.insert(f.name.clone()), "duplicate field {}", f.name);
            if let FieldKind::Enum { allowed } = &f.kind {
                assert!(!allowed.is_empty(), "enum field {} has no values", f.name);
            }
        }
        SchemaDescriptor {
            name: name.to_string(),
            version: version.to_string(),
            fields,
        }
    }
}

pub fn field(name: &str, kind: FieldKind, required: bool) -> FieldSpec {
    FieldSpec {
        name: name.to_string(),
        kind,
        required,
    }
}

/// Unknown-field policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    /// Unknown fields are violations.
    Strict,
    /// Unknown fields are logged and ignored.
    Lenient,
}

/// Check a parsed document against a schema: required fields, kinds, enum
/// membership, numeric ranges, and (in strict mode) unknown fields.
pub fn validate_schema(
    parsed: &Value,
    schema: &SchemaDescriptor,
    strictness: Strictness,
) -> ValidationOutcome {
    let mut violations = Vec::new();
    let obj = match parsed.as_object() {
        Some(o) => o,
        None => {
            return ValidationOutcome::fail(
                Stage::Schema,
                vec![violation("kind", "top-level value is not an object")],
            )
        }
    };

    for spec in &schema.fields {
        match obj.get(&spec.name) {
            None | Some(Value::Null) => {
                if spec.required {
                    violations.push(violation(
                        "required",
                        format!("missing required field {}", spec.name),
                    ));
                }
            }
            Some(value) => check_kind(&spec.name, value, &spec.kind, strictness, &mut violations),
        }
    }

    for key in obj.keys() {
        if !schema.fields.iter().any(|f| &f.name == key) {
            match strictness {
                Strictness::Strict => violations.push(violation(
                    "unknown_field",
                    format!("unknown field {key} in {}", schema.name),
                )),
                Strictness::Lenient => {
                    log::debug!("ignoring unknown field {key} in {}", schema.name)
                }
            }
        }
    }

    ValidationOutcome::from_violations(Stage::Schema, violations)
}

fn check_kind(
    name: &str,
    value: &Value,
    kind: &FieldKind,
    strictness: Strictness,
    violations: &mut Vec<Violation>,
) {
    match kind {
        FieldKind::String => {
            if !value.is_string() {
                violations.push(violation("kind", format!("{name} must be a string")));
            }
        }
        FieldKind::Boolean => {
            if !value.is_boolean() {
                violations.push(violation("kind", format!("{name} must be a boolean")));
            }
        }
        FieldKind::Decimal { min, max } => match value.as_f64() {
            Some(v) => {
                if min.is_some_and(|m| v < m) || max.is_some_and(|m| v > m) {
                    violations.push(violation(
                        "range",
                        format!(
                            "{name} = {v} outside [{}, {}]",
                            min.map_or("-inf".into(), |m| m.to_string()),
                            max.map_or("+inf".into(), |m| m.to_string())
                        ),
                    ));
                }
            }
            None => violations.push(violation("kind", format!("{name} must be a number"))),
        },
        FieldKind::Integer { min, max } => match value.as_i64() {
            Some(v) => {
                if min.is_some_and(|m| v < m) || max.is_some_and(|m| v > m) {
                    violations.push(violation(
                        "range",
                        format!(
                            "{name} = {v} outside [{}, {}]",
                            min.map_or("-inf".into(), |m| m.to_string()),
                            max.map_or("+inf".into(), |m| m.to_string())
                        ),
                    ));
                }
            }
            None => violations.push(violation("kind", format!("{name} must be an integer"))),
        },
        FieldKind::Enum { allowed } => match value.as_str() {
            Some(s) if allowed.iter().any(|a| a == s) => {}
            Some(s) => violations.push(violation(
                "enum",
                format!("{name} = {s:?} not in {allowed:?}"),
            )),
            None => violations.push(violation("kind", format!("{name} must be a string enum"))),
        },
        FieldKind::List { item } => match value.as_array() {
            Some(items) => {
                for (i, v) in items.iter().enumerate() {
                    check_kind(&format!("{name}[{i}]"), v, item, strictness, violations);
                }
            }
            None => violations.push(violation("kind", format!("{name} must be a list"))),
        },
        FieldKind::Object { schema } => {
            let nested = validate_schema(value, schema, strictness);
            for mut v in nested.violations {
                v.message = format!("{name}.{}", v.message);
                violations.push(v);
            }
        }
        FieldKind::Map => match value.as_object() {
            Some(map) => {
                for (k, v) in map {
                    if v.is_array() || v.is_object() {
                        violations.push(violation(
                            "kind",
                            format!("{name}.{k} must be a scalar"),
                        ));
                    }
                }
            }
            None => violations.push(violation("kind", format!("{name} must be a map"))),
        },
    }
}

// ---------------------------------------------------------------------------
// Consistency rules
// ---------------------------------------------------------------------------

pub const RULE_POSITIVE_GRADE: &str = "rule1_positive_grade";
pub const RULE_E3_REASONING: &str = "rule2_e3_reasoning";
pub const RULE_E4_CITATION: &str = "rule3_e4_citation";
pub const RULE_NEGATIVE_GRADE: &str = "rule4_negative_grade";

/// True when `reasoning` embeds at least one machine-readable evidence
/// citation of the `[ent:...]` form the judge prompt requires.
pub fn has_citation_marker(reasoning: &str) -> bool {
    citation_regex().is_match(reasoning)
}

fn citation_regex() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"\[ent:[^\]\s]+\]").unwrap())
}

/// The four consistency rules binding the binary verdict, the evidence
/// grade, and the reasoning content:
///
/// 1. a detected hallucination must carry grade E3 or E4;
/// 2. an E3 grade must come with reasoning that explains the problem
///    without citing conflicting evidence (non-empty, no citation marker);
/// 3. an E4 grade must cite specific conflicting evidence (at least one
///    citation marker);
/// 4. a clean sentence must carry grade E1 or E2.
pub fn check_consistency(status: bool, grade: EvidenceGrade, reasoning: &str) -> ValidationOutcome {
    let mut violations = Vec::new();
    if status && !matches!(grade, EvidenceGrade::E3 | EvidenceGrade::E4) {
        violations.push(violation(
            RULE_POSITIVE_GRADE,
            format!("hallucination detected but grade is {grade}"),
        ));
    }
    if grade == EvidenceGrade::E3 && (reasoning.trim().is_empty() || has_citation_marker(reasoning))
    {
        violations.push(violation(
            RULE_E3_REASONING,
            "E3 reasoning must explain the problem without citing conflicting evidence",
        ));
    }
    if grade == EvidenceGrade::E4 && !has_citation_marker(reasoning) {
        violations.push(violation(
            RULE_E4_CITATION,
            "E4 reasoning must cite specific conflicting evidence ([ent:...])",
        ));
    }
    if !status && !matches!(grade, EvidenceGrade::E1 | EvidenceGrade::E2) {
        violations.push(violation(
            RULE_NEGATIVE_GRADE,
            format!("no hallucination detected but grade is {grade}"),
        ));
    }
    ValidationOutcome::from_violations(Stage::Consistency, violations)
}

/// Rule check over a full detection result (status, grade, reasoning).
pub fn validate_consistency(result: &crate::detect::DetectionResult) -> ValidationOutcome {
    check_consistency(
        result.hallucination_status,
        result.grade,
        &result.reasoning,
    )
}

// ---------------------------------------------------------------------------
// Extraction -> repair -> parse -> schema chain, and the retry loop
// ---------------------------------------------------------------------------

/// Outcome of one raw-text pass through the parse chain.
pub struct ChainResult {
    pub value: Value,
    pub repairs: Vec<String>,
}

/// Run extraction, repair, parse, and schema validation on raw model text.
pub fn parse_chain(
    raw: &str,
    schema: &SchemaDescriptor,
    strictness: Strictness,
) -> Result<ChainResult, ValidationOutcome> {
    let candidate = match extract_json(raw) {
        Ok(c) => c,
        Err(StructuredError::NoJsonFound) => {
            // salvage a truncated object: repair can close it
            match raw.find('{') {
                Some(pos) => raw[pos..].to_string(),
                None => {
                    return Err(ValidationOutcome::fail(
                        Stage::Extraction,
                        vec![violation("no_json", "no JSON object in output")],
                    ))
                }
            }
        }
        Err(e) => {
            return Err(ValidationOutcome::fail(
                Stage::Extraction,
                vec![violation("extract", e.to_string())],
            ))
        }
    };

    let (repaired, repairs) = match repair_json(&candidate) {
        Ok(r) => r,
        Err(e) => {
            return Err(ValidationOutcome::fail(
                Stage::Parse,
                vec![violation("unrepairable", e.to_string())],
            ))
        }
    };

    let value: Value = match serde_json::from_str(&repaired) {
        Ok(v) => v,
        Err(e) => {
            return Err(ValidationOutcome::fail(
                Stage::Parse,
                vec![violation("parse", e.to_string())],
            ))
        }
    };

    let outcome = validate_schema(&value, schema, strictness);
    if !outcome.ok {
        return Err(outcome);
    }
    Ok(ChainResult { value, repairs })
}

/// What the retry loop hands back: either an accepted value, or the last
/// available candidate with its violations attached.
#[derive(Debug)]
pub struct AcceptReport<T> {
    pub value: Option<T>,
    pub accepted: bool,
    pub attempts: u32,
    pub violations: Vec<Violation>,
    pub repairs: Vec<String>,
}

/// Loop extraction -> repair -> parse -> schema -> consistency, requesting a
/// fresh generation on each failure, for at most `budget` total attempts.
/// After the budget is exhausted the last parseable candidate is returned
/// flagged with its violation list; it is never silently dropped.
pub fn accept_or_retry<T, R, C>(
    first: String,
    mut regenerate: R,
    schema: &SchemaDescriptor,
    strictness: Strictness,
    check: C,
    budget: u32,
) -> Result<AcceptReport<T>, LlmError>
where
    T: DeserializeOwned,
    R: FnMut() -> Result<String, LlmError>,
    C: Fn(&T) -> ValidationOutcome,
{
    assert!(budget >= 1, "retry budget must be at least 1");
    // the last parseable candidate survives even if a later attempt fails
    // to parse at all; the violation list always reflects the last attempt
    let mut last_value: Option<T> = None;
    let mut raw = first;
    let mut attempts = 0u32;

    loop {
        attempts += 1;
        let (parsed, violations, repairs) = match parse_chain(&raw, schema, strictness) {
            Ok(chain) => match serde_json::from_value::<T>(chain.value) {
                Ok(parsed) => {
                    let outcome = check(&parsed);
                    if outcome.ok {
                        return Ok(AcceptReport {
                            value: Some(parsed),
                            accepted: true,
                            attempts,
                            violations: Vec::new(),
                            repairs: chain.repairs,
                        });
                    }
                    (Some(parsed), outcome.violations, chain.repairs)
                }
                Err(e) => (
                    None,
                    vec![violation("deserialize", e.to_string())],
                    chain.repairs,
                ),
            },
            Err(outcome) => (None, outcome.violations, Vec::new()),
        };
        if parsed.is_some() {
            last_value = parsed;
        }

        if attempts >= budget {
            return Ok(AcceptReport {
                value: last_value,
                accepted: false,
                attempts,
                violations,
                repairs,
            });
        }
        raw = regenerate()?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    fn grade_schema() -> SchemaDescriptor {
        SchemaDescriptor::new(
            "probe",
            "v1",
            vec![
                field(
                    "evidence_grade",
                    FieldKind::Enum {
                        allowed: EvidenceGrade::ALL.iter().map(|g| g.to_string()).collect(),
                    },
                    true,
                ),
                field(
                    "support",
                    FieldKind::Decimal {
                        min: Some(0.0),
                        max: Some(1.0),
                    },
                    true,
                ),
            ],
        )
    }

    #[test]
    fn schema_rejects_out_of_enum_grade() {
        let value: Value = serde_json::json!({"evidence_grade": "E5", "support": 0.5});
        let outcome = validate_schema(&value, &grade_schema(), Strictness::Strict);
        assert!(!outcome.ok);
        assert_eq!(outcome.violations[0].rule_id, "enum");
    }

    #[test]
    fn schema_rejects_out_of_range_support() {
        let value: Value = serde_json::json!({"evidence_grade": "E1", "support": 1.3});
        let outcome = validate_schema(&value, &grade_schema(), Strictness::Strict);
        assert!(!outcome.ok);
        assert_eq!(outcome.violations[0].rule_id, "range");
    }

    #[test]
    fn schema_accepts_complete_valid_record() {
        let value: Value = serde_json::json!({"evidence_grade": "E2", "support": 0.8});
        let outcome = validate_schema(&value, &grade_schema(), Strictness::Strict);
        assert!(outcome.ok);
        assert!(outcome.violations.is_empty());
    }

    #[test]
    fn unknown_fields_strict_vs_lenient() {
        let value: Value =
            serde_json::json!({"evidence_grade": "E2", "support": 0.8, "extra": 1});
        assert!(!validate_schema(&value, &grade_schema(), Strictness::Strict).ok);
        assert!(validate_schema(&value, &grade_schema(), Strictness::Lenient).ok);
    }

    #[test]
    fn consistency_rule1_fires_on_positive_with_low_grade() {
        let outcome = check_consistency(true, EvidenceGrade::E2, "something [ent:x]");
        assert!(outcome
            .violations
            .iter()
            .any(|v| v.rule_id == RULE_POSITIVE_GRADE));
    }

    #[test]
    fn consistency_rule3_satisfied_by_citation() {
        let outcome = check_consistency(
            true,
            EvidenceGrade::E4,
            "conflicts with recorded diagnosis [ent:ab12cd]",
        );
        assert!(outcome.ok);
    }

    #[test]
    fn consistency_rule4_fires_on_negative_e4() {
        let outcome = check_consistency(false, EvidenceGrade::E4, "fine [ent:x]");
        assert!(outcome
            .violations
            .iter()
            .any(|v| v.rule_id == RULE_NEGATIVE_GRADE));
    }

    #[test]
    fn e3_reasoning_must_not_cite() {
        let bad = check_consistency(true, EvidenceGrade::E3, "no support but see [ent:x]");
        assert!(bad.violations.iter().any(|v| v.rule_id == RULE_E3_REASONING));
        let good = check_consistency(true, EvidenceGrade::E3, "no record of this event exists");
        assert!(good.ok);
    }

    #[derive(Debug, Deserialize)]
    struct Probe {
        evidence_grade: String,
        support: f64,
    }

    #[test]
    fn accept_on_first_attempt() {
        let report = accept_or_retry::<Probe, _, _>(
            r#"{"evidence_grade": "E1", "support": 0.9}"#.to_string(),
            || panic!("no regeneration needed"),
            &grade_schema(),
            Strictness::Strict,
            |_| ValidationOutcome::ok(Stage::Consistency),
            3,
        )
        .unwrap();
        assert!(report.accepted);
        assert_eq!(report.attempts, 1);
        assert_eq!(report.value.unwrap().support, 0.9);
    }

    #[test]
    fn accept_on_third_attempt() {
        let mut responses = vec![
            r#"{"evidence_grade": "E9", "support": 0.9}"#.to_string(),
            r#"{"evidence_grade": "E1", "support": 0.7}"#.to_string(),
        ]
        .into_iter();
        let report = accept_or_retry::<Probe, _, _>(
            "not json at all".to_string(),
            || Ok(responses.next().unwrap()),
            &grade_schema(),
            Strictness::Strict,
            |_| ValidationOutcome::ok(Stage::Consistency),
            3,
        )
        .unwrap();
        assert!(report.accepted);
        assert_eq!(report.attempts, 3);
        assert_eq!(report.value.unwrap().support, 0.7);
    }

    #[test]
    fn exhausted_budget_returns_flagged_last() {
        let mut responses = vec![
            r#"{"evidence_grade": "E2", "support": 0.8}"#.to_string(),
            r#"{"evidence_grade": "E2", "support": 0.8}"#.to_string(),
        ]
        .into_iter();
        let report = accept_or_retry::<Probe, _, _>(
            r#"{"evidence_grade": "E2", "support": 0.8}"#.to_string(),
            || Ok(responses.next().unwrap()),
            &grade_schema(),
            Strictness::Strict,
            |p| {
                ValidationOutcome::fail(
                    Stage::Consistency,
                    vec![Violation {
                        rule_id: "probe_reject".into(),
                        message: format!("grade {} rejected", p.evidence_grade),
                    }],
                )
            },
            3,
        )
        .unwrap();
        assert!(!report.accepted);
        assert_eq!(report.attempts, 3);
        assert!(report.value.is_some());
        assert!(!report.violations.is_empty());
    }
}
