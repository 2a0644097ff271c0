//! Loading, validating, and synthesizing multi-table patient record bundles.
//!
//! A bundle directory holds six UTF-8 comma-delimited tables with header
//! rows: `diagnosis.csv`, `discharge.csv`, `discharge_target.csv`,
//! `edstays.csv`, `radiology.csv`, `triage.csv`. The target text (brief
//! hospital course) is the text the rest of the pipeline rewrites and
//! verifies; everything else is evidence. Loading is read-only and filters
//! strictly by patient id, so records for distinct patients never mix.

pub mod fixture;

pub use fixture::{generate_fixture, generate_fixture_from};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

pub const TABLE_DIAGNOSIS: &str = "diagnosis";
pub const TABLE_DISCHARGE: &str = "discharge";
pub const TABLE_DISCHARGE_TARGET: &str = "discharge_target";
pub const TABLE_EDSTAYS: &str = "edstays";
pub const TABLE_RADIOLOGY: &str = "radiology";
pub const TABLE_TRIAGE: &str = "triage";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    /// The named table (or the requested patient's row in it) is absent.
    #[error("missing table or row: {0}")]
    MissingTable(String),
    #[error("malformed row in {file} line {line}: {message}")]
    MalformedRow {
        file: String,
        line: u64,
        message: String,
    },
    /// Conflicting rows claim the same patient in a one-row-per-patient table.
    #[error("conflicting rows for patient {patient} in {file}")]
    IdMismatch { file: String, patient: String },
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One ICD-style diagnosis row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisRow {
    pub code: String,
    pub label: String,
    pub seq: u32,
}

/// Triage vitals; absent fields were not recorded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriageVitals {
    pub temperature: Option<f64>,
    pub heart_rate: Option<f64>,
    pub respiratory_rate: Option<f64>,
    pub spo2: Option<f64>,
    pub dbp: Option<f64>,
    pub pain: Option<i32>,
    pub acuity: Option<i32>,
}

/// One emergency-department stay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdStayRow {
    pub stay_id: String,
    pub in_time: NaiveDateTime,
    pub out_time: NaiveDateTime,
    pub disposition: String,
}

/// One patient's full record bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub diagnoses: Vec<DiagnosisRow>,
    /// Complete discharge record text; the primary factual reference.
    pub discharge_text: String,
    /// Brief hospital course; the text to rewrite and verify.
    pub target_text: String,
    /// Parsed but excluded from evaluation.
    pub discharge_instructions: String,
    pub ed_stays: Vec<EdStayRow>,
    pub radiology_reports: Vec<String>,
    pub triage: TriageVitals,
}

/// Non-fatal data problems found by [`validate_bundle`].
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationWarning {
    Range {
        field: String,
        value: f64,
        min: f64,
        max: f64,
    },
    DuplicateSeq {
        seq: u32,
    },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::Range {
                field,
                value,
                min,
                max,
            } => write!(f, "{field} = {value} outside physiological range [{min}, {max}]"),
            ValidationWarning::DuplicateSeq { seq } => {
                write!(f, "duplicate diagnosis seq {seq}")
            }
        }
    }
}

fn table_path(root: &Path, table: &str) -> std::path::PathBuf {
    root.join(format!("{table}.csv"))
}

fn open_reader(root: &Path, table: &str) -> Result<Option<csv::Reader<std::fs::File>>, IngestError> {
    let path = table_path(root, table);
    if !path.exists() {
        return Ok(None);
    }
    let file = std::fs::File::open(&path)?;
    Ok(Some(
        csv::ReaderBuilder::new().has_headers(true).from_reader(file),
    ))
}

fn malformed(table: &str, line: u64, message: impl Into<String>) -> IngestError {
    IngestError::MalformedRow {
        file: format!("{table}.csv"),
        line,
        message: message.into(),
    }
}

fn parse_optional_f64(table: &str, line: u64, field: &str, raw: &str) -> Result<Option<f64>, IngestError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<f64>()
        .map(Some)
        .map_err(|_| malformed(table, line, format!("{field} is not a number: {raw:?}")))
}

fn parse_optional_i32(table: &str, line: u64, field: &str, raw: &str) -> Result<Option<i32>, IngestError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<i32>()
        .map(Some)
        .map_err(|_| malformed(table, line, format!("{field} is not an integer: {raw:?}")))
}

fn parse_timestamp(table: &str, line: u64, field: &str, raw: &str) -> Result<NaiveDateTime, IngestError> {
    NaiveDateTime::parse_from_str(raw.trim(), "%Y-%m-%d %H:%M:%S")
        .map_err(|_| malformed(table, line, format!("{field} is not a timestamp: {raw:?}")))
}

/// Load one patient's bundle from a directory of tables.
///
/// Missing optional tables yield empty defaults; a missing target row (or a
/// target row with empty brief hospital course) is an error, because the
/// pipeline has nothing to verify without it.
pub fn load_bundle(root: &Path, patient_id: &str) -> Result<PatientRecord, IngestError> {
    if patient_id.is_empty() {
        return Err(IngestError::InvalidArg("patient_id must be non-empty".into()));
    }

    // discharge_target: required, exactly one row for the patient
    let mut target_text: Option<String> = None;
    let mut discharge_instructions = String::new();
    match open_reader(root, TABLE_DISCHARGE_TARGET)? {
        None => return Err(IngestError::MissingTable(TABLE_DISCHARGE_TARGET.into())),
        Some(mut reader) => {
            for (i, row) in reader.records().enumerate() {
                let line = (i + 2) as u64;
                let row = row.map_err(|e| malformed(TABLE_DISCHARGE_TARGET, line, e.to_string()))?;
                if row.get(0) != Some(patient_id) {
                    continue;
                }
                if target_text.is_some() {
                    return Err(IngestError::IdMismatch {
                        file: format!("{TABLE_DISCHARGE_TARGET}.csv"),
                        patient: patient_id.to_string(),
                    });
                }
                let course = row
                    .get(1)
                    .ok_or_else(|| malformed(TABLE_DISCHARGE_TARGET, line, "missing brief_hospital_course column"))?;
                target_text = Some(course.to_string());
                discharge_instructions = row.get(2).unwrap_or("").to_string();
            }
        }
    }
    let target_text = match target_text {
        Some(t) if !t.trim().is_empty() => t,
        _ => return Err(IngestError::MissingTable(TABLE_DISCHARGE_TARGET.into())),
    };

    // discharge: optional, at most one row
    let mut discharge_text = String::new();
    if let Some(mut reader) = open_reader(root, TABLE_DISCHARGE)? {
        let mut seen = false;
        for (i, row) in reader.records().enumerate() {
            let line = (i + 2) as u64;
            let row = row.map_err(|e| malformed(TABLE_DISCHARGE, line, e.to_string()))?;
            if row.get(0) != Some(patient_id) {
                continue;
            }
            if seen {
                return Err(IngestError::IdMismatch {
                    file: format!("{TABLE_DISCHARGE}.csv"),
                    patient: patient_id.to_string(),
                });
            }
            seen = true;
            discharge_text = row.get(1).unwrap_or("").to_string();
        }
    }

    // diagnosis: optional, many rows
    let mut diagnoses = Vec::new();
    if let Some(mut reader) = open_reader(root, TABLE_DIAGNOSIS)? {
        for (i, row) in reader.records().enumerate() {
            let line = (i + 2) as u64;
            let row = row.map_err(|e| malformed(TABLE_DIAGNOSIS, line, e.to_string()))?;
            if row.get(0) != Some(patient_id) {
                continue;
            }
            let code = row
                .get(1)
                .filter(|c| !c.trim().is_empty())
                .ok_or_else(|| malformed(TABLE_DIAGNOSIS, line, "empty diagnosis code"))?;
            let label = row.get(2).unwrap_or("").to_string();
            let seq: u32 = row
                .get(3)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| malformed(TABLE_DIAGNOSIS, line, "seq is not an integer"))?;
            if seq < 1 {
                return Err(malformed(TABLE_DIAGNOSIS, line, "seq must be >= 1"));
            }
            diagnoses.push(DiagnosisRow {
                code: code.to_string(),
                label,
                seq,
            });
        }
    }

    // edstays: optional, many rows
    let mut ed_stays = Vec::new();
    if let Some(mut reader) = open_reader(root, TABLE_EDSTAYS)? {
        for (i, row) in reader.records().enumerate() {
            let line = (i + 2) as u64;
            let row = row.map_err(|e| malformed(TABLE_EDSTAYS, line, e.to_string()))?;
            if row.get(0) != Some(patient_id) {
                continue;
            }
            let in_time = parse_timestamp(TABLE_EDSTAYS, line, "in_time", row.get(2).unwrap_or(""))?;
            let out_time = parse_timestamp(TABLE_EDSTAYS, line, "out_time", row.get(3).unwrap_or(""))?;
            if out_time < in_time {
                return Err(malformed(TABLE_EDSTAYS, line, "out_time precedes in_time"));
            }
            ed_stays.push(EdStayRow {
                stay_id: row.get(1).unwrap_or("").to_string(),
                in_time,
                out_time,
                disposition: row.get(4).unwrap_or("").to_string(),
            });
        }
    }

    // radiology: optional, many rows
    let mut radiology_reports = Vec::new();
    if let Some(mut reader) = open_reader(root, TABLE_RADIOLOGY)? {
        for (i, row) in reader.records().enumerate() {
            let line = (i + 2) as u64;
            let row = row.map_err(|e| malformed(TABLE_RADIOLOGY, line, e.to_string()))?;
            if row.get(0) != Some(patient_id) {
                continue;
            }
            let text = row.get(1).unwrap_or("").to_string();
            if !text.trim().is_empty() {
                radiology_reports.push(text);
            }
        }
    }

    // triage: optional, at most one row
    let mut triage = TriageVitals::default();
    if let Some(mut reader) = open_reader(root, TABLE_TRIAGE)? {
        let mut seen = false;
        for (i, row) in reader.records().enumerate() {
            let line = (i + 2) as u64;
            let row = row.map_err(|e| malformed(TABLE_TRIAGE, line, e.to_string()))?;
            if row.get(0) != Some(patient_id) {
                continue;
            }
            if seen {
                return Err(IngestError::IdMismatch {
                    file: format!("{TABLE_TRIAGE}.csv"),
                    patient: patient_id.to_string(),
                });
            }
            seen = true;
            triage = TriageVitals {
                temperature: parse_optional_f64(TABLE_TRIAGE, line, "temperature", row.get(1).unwrap_or(""))?,
                heart_rate: parse_optional_f64(TABLE_TRIAGE, line, "heart_rate", row.get(2).unwrap_or(""))?,
                respiratory_rate: parse_optional_f64(TABLE_TRIAGE, line, "respiratory_rate", row.get(3).unwrap_or(""))?,
                spo2: parse_optional_f64(TABLE_TRIAGE, line, "spo2", row.get(4).unwrap_or(""))?,
                dbp: parse_optional_f64(TABLE_TRIAGE, line, "dbp", row.get(5).unwrap_or(""))?,
                pain: parse_optional_i32(TABLE_TRIAGE, line, "pain", row.get(6).unwrap_or(""))?,
                acuity: parse_optional_i32(TABLE_TRIAGE, line, "acuity", row.get(7).unwrap_or(""))?,
            };
        }
    }

    Ok(PatientRecord {
        patient_id: patient_id.to_string(),
        diagnoses,
        discharge_text,
        target_text,
        discharge_instructions,
        ed_stays,
        radiology_reports,
        triage,
    })
}

/// Physiological validity bounds for triage vitals.
const VITAL_BOUNDS: &[(&str, f64, f64)] = &[
    ("temperature", 90.0, 110.0),
    ("heart_rate", 0.0, 300.0),
    ("respiratory_rate", 0.0, 80.0),
    ("spo2", 0.0, 100.0),
    ("dbp", 0.0, 200.0),
];

/// Check a loaded record for suspicious values. Never mutates; returns
/// warnings only.
pub fn validate_bundle(record: &PatientRecord) -> Vec<ValidationWarning> {
    let mut warnings = Vec::new();

    let vitals: [(&str, Option<f64>); 5] = [
        ("temperature", record.triage.temperature),
        ("heart_rate", record.triage.heart_rate),
        ("respiratory_rate", record.triage.respiratory_rate),
        ("spo2", record.triage.spo2),
        ("dbp", record.triage.dbp),
    ];
    for (field, value) in vitals {
        if let Some(v) = value {
            let (_, min, max) = VITAL_BOUNDS
                .iter()
                .find(|(name, _, _)| *name == field)
                .expect("bound exists for every checked vital");
            if v < *min || v > *max {
                warnings.push(ValidationWarning::Range {
                    field: field.to_string(),
                    value: v,
                    min: *min,
                    max: *max,
                });
            }
        }
    }
    if let Some(pain) = record.triage.pain {
        if !(0..=10).contains(&pain) {
            warnings.push(ValidationWarning::Range {
                field: "pain".into(),
                value: pain as f64,
                min: 0.0,
                max: 10.0,
            });
        }
    }
    if let Some(acuity) = record.triage.acuity {
        if !(1..=5).contains(&acuity) {
            warnings.push(ValidationWarning::Range {
                field: "acuity".into(),
                value: acuity as f64,
                min: 1.0,
                max: 5.0,
            });
        }
    }

    let mut seen = std::collections::BTreeSet::new();
    for d in &record.diagnoses {
        if !seen.insert(d.seq) {
            warnings.push(ValidationWarning::DuplicateSeq { seq: d.seq });
        }
    }

    warnings
}
