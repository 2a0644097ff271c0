//! Controlled error injection into target text.
//!
//! The target document segments into sentences; an applicability judgment
//! filters for sentences carrying verifiable, rewritable facts of moderate
//! complexity; a seeded sampler picks the configured fraction; each picked
//! sentence gets one typed rewrite from the backend, guarded by a
//! plausibility check and dual verification. Samples of the six conflict
//! types splice over their original span; invented facts append as new
//! sentences, so indices keep aligning after re-segmentation.
//!
//! Type assignment restricts to types compatible with the facts a sentence
//! actually mentions and cycles through them least-used-first, with
//! invented_fact always available as the fallback.

use crate::config::GenerationConfig;
use crate::eval::GoldLabel;
use crate::ingest::PatientRecord;
use crate::llm::{prompts, ChatRequest, LlmClient, LlmError};
use crate::segment::{segment, SentenceUnit};
use crate::structured::{
    accept_or_retry, field, FieldKind, SchemaDescriptor, Stage, Strictness, ValidationOutcome,
    Violation,
};
use crate::taxonomy::{EvidenceGrade, HallucinationType};
use crate::util::parallel_map_ordered;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const SAMPLE_SCHEMA_VERSION: &str = "sample/1";

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("llm: {0}")]
    Llm(#[from] LlmError),
    #[error("structured output unusable after retries: {0}")]
    Schema(String),
    #[error("medically implausible rewrite: {0}")]
    PlausibilityReject(String),
    #[error("sample index {index} out of range for {len} sentences")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The three stage-1 filter criteria; a sentence is applicable exactly
/// when all three hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionFlags {
    pub has_verifiable_fact: bool,
    pub plausibly_rewritable: bool,
    pub moderate_complexity: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicabilityJudgment {
    pub sentence_index: usize,
    pub applicable: bool,
    pub criterion_flags: CriterionFlags,
    pub rationale: String,
}

/// One labeled injected error. The generation-side grade follows the type:
/// conflict types are E4, invented facts E3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationSample {
    pub patient_id: String,
    pub sentence_index: usize,
    pub original_text: String,
    pub hallucinated_text: String,
    pub htype: HallucinationType,
    pub generation_grade: EvidenceGrade,
    pub explanation: String,
    pub evidence_excerpt: String,
}

fn applicability_schema() -> SchemaDescriptor {
    SchemaDescriptor::new(
        "applicability",
        "v1",
        vec![
            field("has_verifiable_fact", FieldKind::Boolean, true),
            field("plausibly_rewritable", FieldKind::Boolean, true),
            field("moderate_complexity", FieldKind::Boolean, true),
            field("rationale", FieldKind::String, true),
        ],
    )
}

#[derive(Debug, Deserialize)]
struct RawApplicability {
    has_verifiable_fact: bool,
    plausibly_rewritable: bool,
    moderate_complexity: bool,
    rationale: String,
}

fn rewrite_schema() -> SchemaDescriptor {
    SchemaDescriptor::new(
        "rewrite",
        "v1",
        vec![
            field("hallucinated_text", FieldKind::String, true),
            field("explanation", FieldKind::String, true),
            field("evidence_excerpt", FieldKind::String, false),
        ],
    )
}

#[derive(Debug, Deserialize)]
struct RawRewrite {
    hallucinated_text: String,
    explanation: String,
    #[serde(default)]
    evidence_excerpt: String,
}

/// Judge whether one sentence is suitable for rewriting. The applicable
/// flag is recomputed in code as the conjunction of the three criteria.
pub fn assess_applicability(
    sentence: &SentenceUnit,
    llm: &LlmClient,
    patient_id: &str,
    budget: u32,
) -> Result<ApplicabilityJudgment, GenerateError> {
    let prompt = prompts::APPLICABILITY.render(&[("sentence", sentence.text.as_str())]);
    let request = ChatRequest::new(&prompts::APPLICABILITY.asset_ref(), prompt, 0.0)
        .tag("stage", "applicability")
        .tag("patient_id", patient_id)
        .tag("sentence_index", sentence.index);

    let first = llm.complete(&request)?;
    let report = accept_or_retry::<RawApplicability, _, _>(
        first,
        || llm.complete(&request),
        &applicability_schema(),
        Strictness::Strict,
        |_| ValidationOutcome::ok(Stage::Consistency),
        budget,
    )?;
    match (report.accepted, report.value) {
        (true, Some(raw)) => {
            let flags = CriterionFlags {
                has_verifiable_fact: raw.has_verifiable_fact,
                plausibly_rewritable: raw.plausibly_rewritable,
                moderate_complexity: raw.moderate_complexity,
            };
            Ok(ApplicabilityJudgment {
                sentence_index: sentence.index,
                applicable: flags.has_verifiable_fact
                    && flags.plausibly_rewritable
                    && flags.moderate_complexity,
                criterion_flags: flags,
                rationale: raw.rationale,
            })
        }
        _ => Err(GenerateError::Schema(join_violations(&report.violations))),
    }
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("{}: {}", v.rule_id, v.message))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Assess every sentence concurrently; results come back in index order.
pub fn assess_all(
    units: &[SentenceUnit],
    llm: &LlmClient,
    patient_id: &str,
    worker_budget: usize,
    retry_budget: u32,
) -> Result<Vec<ApplicabilityJudgment>, GenerateError> {
    let items: Vec<SentenceUnit> = units.to_vec();
    let results = parallel_map_ordered(items, worker_budget, |_, unit| {
        assess_applicability(&unit, llm, patient_id, retry_budget)
    });
    results.into_iter().collect()
}

/// Uniformly sample ceil(ratio * applicable) target sentence indices,
/// deterministic per seed.
pub fn sample_targets(
    judgments: &[ApplicabilityJudgment],
    ratio: f64,
    seed: u64,
) -> BTreeSet<usize> {
    assert!(ratio > 0.0 && ratio <= 1.0, "ratio must be in (0, 1]");
    let applicable: Vec<usize> = judgments
        .iter()
        .filter(|j| j.applicable)
        .map(|j| j.sentence_index)
        .collect();
    let count = (ratio * applicable.len() as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, applicable.len(), count.min(applicable.len()));
    picked.iter().map(|i| applicable[i]).collect()
}

/// Fact-class vocabularies used to decide which error types fit a sentence.
const MEDICATION_WORDS: &[&str] = &[
    "azithromycin",
    "metformin",
    "lisinopril",
    "warfarin",
    "aspirin",
    "atorvastatin",
    "furosemide",
    "insulin",
    "albuterol",
    "ferrous sulfate",
    "clarithromycin",
    "prescribed",
    "medication",
];

const LAB_WORDS: &[&str] = &[
    "wbc", "hgb", "hct", "glucose", "creatinine", "bun", "inr", "ldl", "hdl", "platelet",
    "sodium", "potassium", "eosinophils", "lab",
];

const VITAL_WORDS: &[&str] = &[
    "blood pressure",
    "heart rate",
    "temperature",
    "respiratory rate",
    "spo2",
    "oxygen saturation",
    "pulse",
];

const NEGATION_WORDS: &[&str] = &["no ", "denies", "without", "negative for", "not "];

const TIME_WORDS: &[&str] = &[
    "yesterday",
    "today",
    "last week",
    "post-op day",
    "hospital day",
    "admitted on",
    "discharged on",
];

/// Error types compatible with the facts a sentence mentions, in taxonomy
/// order; invented_fact is always last as the universal fallback.
pub fn compatible_types(sentence: &str, record: &PatientRecord) -> Vec<HallucinationType> {
    let lower = sentence.to_lowercase();
    let mut out = Vec::new();

    let mentions_diagnosis = record
        .diagnoses
        .iter()
        .any(|d| !d.label.is_empty() && lower.contains(&d.label.to_lowercase()))
        || lower.contains("diagnos");
    if mentions_diagnosis {
        out.push(HallucinationType::DiagnosisError);
    }
    if MEDICATION_WORDS.iter().any(|w| lower.contains(w)) {
        out.push(HallucinationType::MedicationError);
    }
    if LAB_WORDS.iter().any(|w| lower.contains(w)) {
        out.push(HallucinationType::ExamResultError);
    }
    let has_date = regex_time().is_match(&lower) || TIME_WORDS.iter().any(|w| lower.contains(w));
    if has_date {
        out.push(HallucinationType::TimeError);
    }
    if VITAL_WORDS.iter().any(|w| lower.contains(w)) {
        out.push(HallucinationType::ValueError);
    }
    if NEGATION_WORDS.iter().any(|w| lower.contains(w)) {
        out.push(HallucinationType::NegationError);
    }
    out.push(HallucinationType::InventedFact);
    out
}

fn regex_time() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"\b\d{1,2}/\d{1,2}\b|\b\d{4}-\d{2}-\d{2}\b").unwrap())
}

/// Assign an error type to each target sentence: the least-used compatible
/// type wins, ties resolve in taxonomy order.
pub fn assign_types(
    targets: &BTreeSet<usize>,
    units: &[SentenceUnit],
    record: &PatientRecord,
) -> Vec<(usize, HallucinationType)> {
    let mut usage: BTreeMap<HallucinationType, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for &index in targets {
        let compat = compatible_types(&units[index].text, record);
        let pick = *compat
            .iter()
            .min_by_key(|t| (usage.get(t).copied().unwrap_or(0), **t))
            .expect("compatible list is never empty");
        *usage.entry(pick).or_insert(0) += 1;
        out.push((index, pick));
    }
    out
}

fn type_definition(htype: HallucinationType) -> &'static str {
    match htype {
        HallucinationType::DiagnosisError => "replace the diagnosis with a different plausible disease",
        HallucinationType::MedicationError => "change the drug name or its dose",
        HallucinationType::ExamResultError => "change a laboratory or examination result value",
        HallucinationType::TimeError => "shift a date, duration, or event ordering",
        HallucinationType::ValueError => "change a vital sign or other measured value",
        HallucinationType::NegationError => "flip an affirmative statement to negative or vice versa",
        HallucinationType::InventedFact => "state one new clinical event with no basis in the evidence",
    }
}

/// Pull record lines that share a content word with the sentence, plus the
/// structured diagnosis and triage facts.
pub fn extract_evidence(record: &PatientRecord, sentence: &str) -> String {
    let lower = sentence.to_lowercase();
    let tokens: BTreeSet<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.len() > 3)
        .collect();
    let mut lines: Vec<String> = Vec::new();
    for d in &record.diagnoses {
        lines.push(format!("Diagnosis: {} - {}", d.code, d.label));
    }
    for candidate in segment(&record.discharge_text) {
        let cl = candidate.text.to_lowercase();
        if tokens.iter().any(|t| cl.contains(t)) {
            lines.push(candidate.text.clone());
        }
    }
    let t = &record.triage;
    let mut vitals = Vec::new();
    if let Some(v) = t.temperature {
        vitals.push(format!("temperature {v:.1} F"));
    }
    if let Some(v) = t.heart_rate {
        vitals.push(format!("heart rate {v:.0} bpm"));
    }
    if let Some(v) = t.spo2 {
        vitals.push(format!("SpO2 {v:.0}%"));
    }
    if let Some(v) = t.dbp {
        vitals.push(format!("diastolic BP {v:.0} mmHg"));
    }
    if !vitals.is_empty() {
        lines.push(format!("Triage vitals: {}", vitals.join(", ")));
    }
    let mut out = lines.join("\n");
    out.truncate(2000);
    out
}

fn plausibility_patterns() -> &'static [(regex::Regex, &'static str)] {
    static PATTERNS: std::sync::OnceLock<Vec<(regex::Regex, &'static str)>> =
        std::sync::OnceLock::new();
    PATTERNS.get_or_init(|| {
        [
            (r"\b(?:blood pressure|bp)\b\D{0,12}(\d{2,3})/(\d{2,3})", "bp"),
            (r"\b(?:heart rate|hr)\b\D{0,12}(\d{2,3})", "heart_rate"),
            (r"\b(?:temperature|temp)\b\D{0,12}(\d{2,3}(?:\.\d)?)", "temperature_f"),
            (r"\b(?:spo2|oxygen saturation)\b\D{0,12}(\d{2,3})", "spo2"),
            (r"\b(?:respiratory rate|rr)\b\D{0,12}(\d{1,3})", "respiratory_rate"),
            (r"\b(?:glucose|blood sugar)\b\D{0,12}(\d{2,4})", "glucose"),
        ]
        .iter()
        .map(|(p, key)| (regex::Regex::new(p).expect("static pattern compiles"), *key))
        .collect()
    })
}

/// Scan a rewrite for clinical values outside the configured plausibility
/// bounds. Returns the first violation found.
pub fn plausibility_violation(text: &str, cfg: &GenerationConfig) -> Option<String> {
    let lower = text.to_lowercase();
    for (re, key) in plausibility_patterns() {
        let key = *key;
        if let Some(caps) = re.captures(&lower) {
            if key == "bp" {
                let sys: f64 = caps[1].parse().ok()?;
                let dia: f64 = caps[2].parse().ok()?;
                if let Some(b) = cfg.plausibility_bounds.get("systolic_bp") {
                    if sys < b.min || sys > b.max {
                        return Some(format!("systolic {sys} outside [{}, {}]", b.min, b.max));
                    }
                }
                if let Some(b) = cfg.plausibility_bounds.get("diastolic_bp") {
                    if dia < b.min || dia > b.max {
                        return Some(format!("diastolic {dia} outside [{}, {}]", b.min, b.max));
                    }
                }
            } else if let Some(b) = cfg.plausibility_bounds.get(key) {
                let v: f64 = caps[1].parse().ok()?;
                if v < b.min || v > b.max {
                    return Some(format!("{key} {v} outside [{}, {}]", b.min, b.max));
                }
            }
        }
    }
    None
}

/// Generate one typed sample for a sentence. For invented_fact the
/// `sentence` may be a fresh appended claim slot (empty text, index >= n).
pub fn generate_sample(
    sentence: &SentenceUnit,
    record: &PatientRecord,
    htype: HallucinationType,
    llm: &LlmClient,
    cfg: &GenerationConfig,
    retry_budget: u32,
) -> Result<HallucinationSample, GenerateError> {
    let evidence = extract_evidence(record, &sentence.text);
    let prompt = prompts::REWRITE.render(&[
        ("htype", htype.as_str()),
        ("type_definition", type_definition(htype)),
        ("evidence", evidence.as_str()),
        ("sentence", sentence.text.as_str()),
    ]);
    let request = ChatRequest::new(&prompts::REWRITE.asset_ref(), prompt, cfg.temperature)
        .tag("stage", "generate")
        .tag("patient_id", &record.patient_id)
        .tag("sentence_index", sentence.index)
        .tag("htype", htype.as_str());

    let first = llm.complete(&request)?;
    let original = sentence.text.clone();
    let report = accept_or_retry::<RawRewrite, _, _>(
        first,
        || llm.complete(&request),
        &rewrite_schema(),
        Strictness::Strict,
        |raw: &RawRewrite| {
            let mut violations = Vec::new();
            if raw.hallucinated_text.trim().is_empty() {
                violations.push(Violation {
                    rule_id: "empty_rewrite".into(),
                    message: "hallucinated_text is empty".into(),
                });
            } else if raw.hallucinated_text == original {
                violations.push(Violation {
                    rule_id: "no_op_rewrite".into(),
                    message: "rewrite equals the original sentence".into(),
                });
            }
            ValidationOutcome::from_violations(Stage::Consistency, violations)
        },
        retry_budget,
    )?;

    let raw = match (report.accepted, report.value) {
        (true, Some(raw)) => raw,
        (false, Some(_)) | (false, None) => {
            return Err(GenerateError::Schema(join_violations(&report.violations)))
        }
        (true, None) => unreachable!("accepted reports carry a value"),
    };

    if let Some(reason) = plausibility_violation(&raw.hallucinated_text, cfg) {
        return Err(GenerateError::PlausibilityReject(reason));
    }

    let generation_grade = if htype == HallucinationType::InventedFact {
        EvidenceGrade::E3
    } else {
        EvidenceGrade::E4
    };
    Ok(HallucinationSample {
        patient_id: record.patient_id.clone(),
        sentence_index: sentence.index,
        original_text: sentence.text.clone(),
        hallucinated_text: raw.hallucinated_text,
        htype,
        generation_grade,
        explanation: raw.explanation,
        evidence_excerpt: raw.evidence_excerpt,
    })
}

/// Dual verification gate: format checks (fields present, grade rule) and
/// logical checks (real rewrite, evidence for conflict types, span safety).
pub fn verify_sample(sample: &HallucinationSample) -> (bool, Vec<String>) {
    let mut reasons = Vec::new();

    if sample.hallucinated_text.trim().is_empty() {
        reasons.push("hallucinated_text empty".to_string());
    }
    if sample.explanation.trim().is_empty() {
        reasons.push("explanation empty".to_string());
    }
    let grade_ok = (sample.htype == HallucinationType::InventedFact)
        == (sample.generation_grade == EvidenceGrade::E3)
        && matches!(sample.generation_grade, EvidenceGrade::E3 | EvidenceGrade::E4);
    if !grade_ok {
        reasons.push(format!(
            "grade rule violated: {} with grade {}",
            sample.htype, sample.generation_grade
        ));
    }
    if sample.hallucinated_text == sample.original_text {
        reasons.push("rewrite equals original".to_string());
    }
    if sample.htype.is_conflict_type() && sample.evidence_excerpt.trim().is_empty() {
        reasons.push("conflict type without evidence excerpt".to_string());
    }
    let text = sample.hallucinated_text.trim();
    if segment(text).len() != 1 || !text.ends_with(['.', '!', '?']) {
        reasons.push("rewrite must be exactly one terminated sentence".to_string());
    }
    (reasons.is_empty(), reasons)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateStats {
    pub attempted: usize,
    pub produced: usize,
    pub discarded: usize,
}

/// Run the full generation stage for one document: sample targets at the
/// configured ratio, assign types, generate each sample concurrently with
/// regeneration on verification failure, and keep only verified samples.
#[allow(clippy::too_many_arguments)]
pub fn generate_all(
    units: &[SentenceUnit],
    judgments: &[ApplicabilityJudgment],
    record: &PatientRecord,
    llm: &LlmClient,
    cfg: &GenerationConfig,
    seed: u64,
    retry_budget: u32,
) -> Result<(Vec<HallucinationSample>, GenerateStats), GenerateError> {
    let targets = sample_targets(judgments, cfg.rewrite_ratio, seed);
    let assignments = assign_types(&targets, units, record);

    // invented facts become appended claims with fresh indices
    let mut next_append = units.len();
    let work: Vec<(SentenceUnit, HallucinationType)> = assignments
        .into_iter()
        .map(|(index, htype)| {
            if htype == HallucinationType::InventedFact {
                let unit = SentenceUnit {
                    index: next_append,
                    text: String::new(),
                    start: 0,
                    end: 0,
                };
                next_append += 1;
                (unit, htype)
            } else {
                (units[index].clone(), htype)
            }
        })
        .collect();

    let attempted = work.len();
    let results = parallel_map_ordered(work, cfg.worker_budget, |_, (unit, htype)| {
        let mut last_reject: Option<GenerateError> = None;
        for _ in 0..=cfg.regeneration_cap {
            match generate_sample(&unit, record, htype, llm, cfg, retry_budget) {
                Ok(sample) => {
                    let (ok, reasons) = verify_sample(&sample);
                    if ok {
                        return Ok(Some(sample));
                    }
                    last_reject = Some(GenerateError::Schema(reasons.join("; ")));
                }
                Err(e @ GenerateError::Llm(LlmError::MockExhausted { .. })) => {
                    // out of scripted responses: surface the prior reason
                    return match last_reject {
                        Some(prior) => Err(prior),
                        None => Err(e),
                    };
                }
                Err(GenerateError::Llm(e)) => return Err(GenerateError::Llm(e)),
                Err(e) => last_reject = Some(e),
            }
        }
        match last_reject {
            Some(GenerateError::PlausibilityReject(r)) => {
                Err(GenerateError::PlausibilityReject(r))
            }
            _ => Ok(None), // discarded after the regeneration cap
        }
    });

    let mut samples = Vec::new();
    let mut discarded = 0;
    for result in results {
        match result {
            Ok(Some(sample)) => samples.push(sample),
            Ok(None) => discarded += 1,
            Err(GenerateError::PlausibilityReject(_)) => discarded += 1,
            Err(e) => return Err(e),
        }
    }
    let produced = samples.len();
    Ok((
        samples,
        GenerateStats {
            attempted,
            produced,
            discarded,
        },
    ))
}

/// Spliced document plus the gold mapping derived from the samples.
#[derive(Debug, Clone)]
pub struct RewriteOutcome {
    pub text: String,
    pub gold: Vec<GoldLabel>,
    /// Sentence count the rewritten document should re-segment to.
    pub expected_sentences: usize,
}

/// Splice hallucinated rewrites into their spans and append invented
/// claims as new sentences.
pub fn rewrite_document(
    document: &str,
    units: &[SentenceUnit],
    samples: &[HallucinationSample],
) -> Result<RewriteOutcome, GenerateError> {
    let n = units.len();
    let mut substitutions: Vec<&HallucinationSample> = Vec::new();
    let mut appended: Vec<&HallucinationSample> = Vec::new();
    for sample in samples {
        if sample.sentence_index < n {
            substitutions.push(sample);
        } else {
            appended.push(sample);
        }
    }
    appended.sort_by_key(|s| s.sentence_index);
    for (offset, sample) in appended.iter().enumerate() {
        if sample.sentence_index != n + offset {
            return Err(GenerateError::IndexOutOfRange {
                index: sample.sentence_index,
                len: n,
            });
        }
    }

    let mut seen = BTreeSet::new();
    for s in &substitutions {
        if !seen.insert(s.sentence_index) {
            return Err(GenerateError::IndexOutOfRange {
                index: s.sentence_index,
                len: n,
            });
        }
    }

    // splice right-to-left so spans stay valid
    let mut text = document.to_string();
    let mut ordered = substitutions.clone();
    ordered.sort_by_key(|s| std::cmp::Reverse(s.sentence_index));
    for sample in ordered {
        let unit = &units[sample.sentence_index];
        text.replace_range(unit.start..unit.end, &sample.hallucinated_text);
    }
    for sample in &appended {
        if !text.is_empty() && !text.ends_with(char::is_whitespace) {
            text.push(' ');
        }
        text.push_str(&sample.hallucinated_text);
    }

    let gold = samples
        .iter()
        .map(|s| GoldLabel {
            patient_id: s.patient_id.clone(),
            sentence_index: s.sentence_index,
            is_hallucination: true,
            htype: Some(s.htype),
            grade: Some(s.generation_grade),
        })
        .collect();

    Ok(RewriteOutcome {
        text,
        gold,
        expected_sentences: n + appended.len(),
    })
}

/// One line per sample, each carrying the schema version.
#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    schema_version: String,
    #[serde(flatten)]
    sample: HallucinationSample,
}

pub fn write_samples(path: &std::path::Path, samples: &[HallucinationSample]) -> Result<(), GenerateError> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    for sample in samples {
        let record = SampleRecord {
            schema_version: SAMPLE_SCHEMA_VERSION.to_string(),
            sample: sample.clone(),
        };
        writeln!(file, "{}", serde_json::to_string(&record).expect("sample serializes"))?;
    }
    Ok(())
}

pub fn read_samples(path: &std::path::Path) -> Result<Vec<HallucinationSample>, GenerateError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(line)
            .map_err(|e| GenerateError::Schema(format!("bad sample line: {e}")))?;
        out.push(record.sample);
    }
    Ok(out)
}
