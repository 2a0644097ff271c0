//! Training-data export: pair each accepted detection with the prompt that
//! produced it and the model's reasoning trace, one JSON record per line.

use super::{CallLog, LlmError};
use crate::detect::DetectionResult;
use crate::generate::HallucinationSample;
use serde_json::json;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistillStats {
    pub written: usize,
    pub excluded_flagged: usize,
}

/// Emit one line-delimited training record per accepted (non-flagged)
/// detection. Flagged results are excluded and counted. The file starts
/// with a `#` header comment so an empty export is still self-describing.
pub fn export_distillation(
    logs: &[CallLog],
    samples: &[HallucinationSample],
    detections: &[(String, Vec<DetectionResult>)],
    out_path: &Path,
) -> Result<DistillStats, LlmError> {
    let mut file = std::fs::File::create(out_path)?;
    let mut written = 0usize;
    let mut excluded = 0usize;
    let mut lines: Vec<String> = Vec::new();

    for (patient_id, results) in detections {
        for result in results {
            if result.flagged {
                excluded += 1;
                continue;
            }
            let prompt = find_prompt(logs, patient_id, result.sentence_index);
            let gold_type = samples
                .iter()
                .find(|s| {
                    &s.patient_id == patient_id && s.sentence_index == result.sentence_index
                })
                .map(|s| s.htype.to_string());
            let record = json!({
                "patient_id": patient_id,
                "sentence_index": result.sentence_index,
                "prompt": prompt,
                "reasoning": result.reasoning,
                "output": {
                    "reasoning": result.reasoning,
                    "hallucination_status": result.hallucination_status,
                    "hallucination_types": result.htypes,
                    "signals": result.signals,
                    "evidence_grade": result.grade,
                },
                "gold_type": gold_type,
            });
            lines.push(serde_json::to_string(&record).expect("record serializes"));
            written += 1;
        }
    }

    writeln!(
        file,
        "# chartcheck distillation export: {written} records ({excluded} flagged results excluded)"
    )?;
    for line in lines {
        writeln!(file, "{line}")?;
    }
    Ok(DistillStats {
        written,
        excluded_flagged: excluded,
    })
}

/// The accepted generation is the last detect-stage call for the sentence.
fn find_prompt(logs: &[CallLog], patient_id: &str, sentence_index: usize) -> String {
    logs.iter()
        .rev()
        .find(|l| {
            l.tags.get("stage").map(String::as_str) == Some("detect")
                && l.tags.get("patient_id").map(String::as_str) == Some(patient_id)
                && l.tags.get("sentence_index").map(String::as_str)
                    == Some(sentence_index.to_string().as_str())
        })
        .and_then(|l| l.rendered_prompt.clone())
        .unwrap_or_default()
}
