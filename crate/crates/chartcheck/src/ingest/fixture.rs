//! Synthetic patient bundle generation.
//!
//! Content is template-based: each patient draws a primary condition plus
//! one to three secondary conditions from a fixed vocabulary, so the diagnoses,
//! medications, labs, and narrative text all agree with each other. That
//! internal consistency is what makes downstream graph construction and
//! controlled error injection well-defined — every fact in the target text
//! has a matching row somewhere in the bundle.

use super::IngestError;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

struct ConditionTemplate {
    diagnosis: &'static str,
    code: &'static str,
    medication: &'static str,
    dose: &'static str,
    symptom: &'static str,
    lab_name: &'static str,
    lab_value: &'static str,
    lab_unit: &'static str,
    procedure: &'static str,
    imaging_finding: Option<&'static str>,
}

const TEMPLATES: &[ConditionTemplate] = &[
    ConditionTemplate {
        diagnosis: "atrial fibrillation",
        code: "I48.0",
        medication: "warfarin",
        dose: "5 mg",
        symptom: "palpitations",
        lab_name: "INR",
        lab_value: "2.4",
        lab_unit: "",
        procedure: "ECG",
        imaging_finding: None,
    },
    ConditionTemplate {
        diagnosis: "pneumonia",
        code: "J18.9",
        medication: "azithromycin",
        dose: "500 mg",
        symptom: "productive cough",
        lab_name: "WBC",
        lab_value: "12.3",
        lab_unit: "10^9/L",
        procedure: "chest radiograph",
        imaging_finding: Some("Chest radiograph: right lower lobe opacity consistent with pneumonia."),
    },
    ConditionTemplate {
        diagnosis: "type 2 diabetes mellitus",
        code: "E11.9",
        medication: "metformin",
        dose: "500 mg",
        symptom: "polyuria",
        lab_name: "glucose",
        lab_value: "96",
        lab_unit: "mg/dL",
        procedure: "foot examination",
        imaging_finding: None,
    },
    ConditionTemplate {
        diagnosis: "hypertension",
        code: "I10",
        medication: "lisinopril",
        dose: "10 mg",
        symptom: "headache",
        lab_name: "creatinine",
        lab_value: "1.0",
        lab_unit: "mg/dL",
        procedure: "blood pressure monitoring",
        imaging_finding: None,
    },
    ConditionTemplate {
        diagnosis: "anemia",
        code: "D64.9",
        medication: "ferrous sulfate",
        dose: "325 mg",
        symptom: "fatigue",
        lab_name: "HGB",
        lab_value: "10.1",
        lab_unit: "g/dL",
        procedure: "blood transfusion",
        imaging_finding: None,
    },
    ConditionTemplate {
        diagnosis: "chronic kidney disease",
        code: "N18.3",
        medication: "furosemide",
        dose: "20 mg",
        symptom: "lower extremity edema",
        lab_name: "BUN",
        lab_value: "28",
        lab_unit: "mg/dL",
        procedure: "renal ultrasound",
        imaging_finding: Some("Renal ultrasound: bilateral increased echogenicity, no hydronephrosis."),
    },
    ConditionTemplate {
        diagnosis: "hyperlipidemia",
        code: "E78.5",
        medication: "atorvastatin",
        dose: "40 mg",
        symptom: "no acute complaints",
        lab_name: "LDL",
        lab_value: "160",
        lab_unit: "mg/dL",
        procedure: "lipid panel",
        imaging_finding: None,
    },
    ConditionTemplate {
        diagnosis: "asthma",
        code: "J45.909",
        medication: "albuterol",
        dose: "90 mcg",
        symptom: "wheezing",
        lab_name: "eosinophils",
        lab_value: "0.5",
        lab_unit: "10^9/L",
        procedure: "spirometry",
        imaging_finding: None,
    },
];

pub fn patient_id(index: u32) -> String {
    format!("P{index:04}")
}

/// Generate `n_patients` synthetic bundles starting at patient index 1.
pub fn generate_fixture(seed: u64, n_patients: u32, out_dir: &Path) -> Result<(), IngestError> {
    generate_fixture_from(seed, n_patients, 1, out_dir)
}

/// Generate bundles for patient indices `start .. start + n_patients`.
///
/// Deterministic: content for a patient depends only on (seed, patient
/// index), so the same id gets the same record no matter the range.
pub fn generate_fixture_from(
    seed: u64,
    n_patients: u32,
    start: u32,
    out_dir: &Path,
) -> Result<(), IngestError> {
    if n_patients < 1 {
        return Err(IngestError::InvalidArg(
            "n_patients must be at least 1".into(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;

    let mut diagnosis = String::from("patient_id,code,label,seq\n");
    let mut discharge = String::from("patient_id,text\n");
    let mut target = String::from("patient_id,brief_hospital_course,discharge_instructions\n");
    let mut edstays = String::from("patient_id,stay_id,in_time,out_time,disposition\n");
    let mut radiology = String::from("patient_id,text\n");
    let mut triage =
        String::from("patient_id,temperature,heart_rate,respiratory_rate,spo2,dbp,pain,acuity\n");

    for index in start..start + n_patients {
        let pid = patient_id(index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15) ^ index as u64);

        let count = 2 + (index as usize % 3);
        let conditions: Vec<&ConditionTemplate> = (0..count)
            .map(|offset| &TEMPLATES[(index as usize + offset) % TEMPLATES.len()])
            .collect();
        let primary = conditions[0];

        for (i, c) in conditions.iter().enumerate() {
            diagnosis.push_str(&format!("{pid},{},{},{}\n", c.code, csv_quote(c.diagnosis), i + 1));
        }

        let temperature = 97.0 + (rng.gen_range(0..45) as f64) / 10.0;
        let heart_rate = rng.gen_range(58..112) as f64;
        let respiratory_rate = rng.gen_range(12..23) as f64;
        let spo2 = rng.gen_range(92..=100) as f64;
        let dbp = rng.gen_range(58..96) as f64;
        let pain = rng.gen_range(0..=8);
        let acuity = rng.gen_range(2..=4);

        let mut discharge_text = format!(
            "Patient {pid} presented to the emergency department with {}. ",
            primary.symptom
        );
        for c in &conditions {
            discharge_text.push_str(&format!(
                "Diagnosis: {} - {}. Medication: {} {}. Lab: {} {}{}. ",
                c.code,
                c.diagnosis,
                c.medication,
                c.dose,
                c.lab_name,
                c.lab_value,
                if c.lab_unit.is_empty() {
                    String::new()
                } else {
                    format!(" {}", c.lab_unit)
                },
            ));
        }
        discharge_text.push_str(&format!(
            "Vitals on arrival: temperature {temperature:.1} F, heart rate {heart_rate:.0} bpm, respiratory rate {respiratory_rate:.0}, SpO2 {spo2:.0}%, diastolic blood pressure {dbp:.0} mmHg. "
        ));
        for c in &conditions {
            discharge_text.push_str(&format!("Procedure: {}. ", c.procedure));
        }
        discharge.push_str(&format!("{pid},{}\n", csv_quote(discharge_text.trim())));

        let mut course = format!("Patient diagnosed with {}. ", primary.diagnosis);
        course.push_str(&format!("Prescribed {} {}. ", primary.medication, primary.dose));
        course.push_str(&format!(
            "{} {}{} on admission. ",
            primary.lab_name,
            primary.lab_value,
            if primary.lab_unit.is_empty() {
                String::new()
            } else {
                format!(" {}", primary.lab_unit)
            },
        ));
        course.push_str(&format!("Underwent {}. ", primary.procedure));
        for c in conditions.iter().skip(1) {
            course.push_str(&format!(
                "Also noted {}, managed with {} {}. ",
                c.diagnosis, c.medication, c.dose
            ));
        }
        course.push_str("Symptoms improved by discharge.");
        let instructions = "Take medications as prescribed. Follow up with primary care in 1 week.";
        target.push_str(&format!(
            "{pid},{},{}\n",
            csv_quote(course.trim()),
            csv_quote(instructions)
        ));

        let in_hour = 6 + (index % 12);
        let stay_hours = rng.gen_range(4..12);
        let out_hour = (in_hour + stay_hours).min(23);
        let day = 1 + (index % 27);
        edstays.push_str(&format!(
            "{pid},S{index:04},2019-03-{day:02} {in_hour:02}:00:00,2019-03-{day:02} {out_hour:02}:00:00,{}\n",
            if rng.gen_bool(0.7) { "HOME" } else { "ADMITTED" }
        ));

        for c in &conditions {
            if let Some(finding) = c.imaging_finding {
                radiology.push_str(&format!("{pid},{}\n", csv_quote(finding)));
            }
        }

        triage.push_str(&format!(
            "{pid},{temperature:.1},{heart_rate:.0},{respiratory_rate:.0},{spo2:.0},{dbp:.0},{pain},{acuity}\n"
        ));
    }

    for (name, content) in [
        ("diagnosis.csv", &diagnosis),
        ("discharge.csv", &discharge),
        ("discharge_target.csv", &target),
        ("edstays.csv", &edstays),
        ("radiology.csv", &radiology),
        ("triage.csv", &triage),
    ] {
        let mut file = std::fs::File::create(out_dir.join(name))?;
        file.write_all(content.as_bytes())?;
    }
    Ok(())
}

/// Quote a CSV field if it contains a comma or quote.
fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
