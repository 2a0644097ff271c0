//! The degenerate-extraction fixture: a scripted scenario reproducing the
//! classic failure modes of unconstrained entity extraction on one patient.
//!
//! The scripted response emits per-parameter lab tests instead of panels,
//! three patient nodes, verbatim duplicate entities, a flood of synonym
//! surface forms, and disconnected evidence islands. Together with the one
//! deterministic table-derived patient node this lands the raw graph at
//! exactly 240 entities (35 LAB_TEST, 3 PATIENT, 18 duplicate pairs, 7
//! components); full normalization under the fixture config collapses it to
//! 58 entities, 6 lab panels, 1 patient, 0 duplicates, 1 component. The
//! builder asserts all of that arithmetic at construction time.

use super::{EntityType, RelationType};
use crate::config::GraphConfig;
use crate::llm::ScenarioEntry;
use std::collections::BTreeMap;
use std::path::Path;

pub const RAW_TOTAL: usize = 240;
pub const RAW_LAB_TESTS: usize = 35;
pub const RAW_PATIENTS: usize = 3;
pub const RAW_DUPLICATES: usize = 18;
pub const RAW_COMPONENTS: usize = 7;
pub const NORMALIZED_TOTAL: usize = 58;
pub const NORMALIZED_LAB_TESTS: usize = 6;

pub const PATIENT_ID: &str = "P0001";

const DIAGNOSES: [&str; 7] = [
    "pneumonia",
    "type 2 diabetes mellitus",
    "hypertension",
    "atrial fibrillation",
    "chronic kidney disease",
    "anemia",
    "hyperlipidemia",
];

const MEDICATIONS: [&str; 8] = [
    "azithromycin",
    "metformin",
    "lisinopril",
    "warfarin",
    "aspirin",
    "atorvastatin",
    "furosemide",
    "insulin glargine",
];

const SYMPTOMS: [&str; 7] = [
    "productive cough",
    "fever",
    "dyspnea",
    "fatigue",
    "chest pain",
    "palpitations",
    "edema",
];

const PROCEDURES: [&str; 8] = [
    "chest radiograph",
    "ECG",
    "echocardiogram",
    "CT chest",
    "blood transfusion",
    "cardiac catheterization",
    "hemodialysis",
    "spirometry",
];

const VITALS: [&str; 8] = [
    "BP 120/80",
    "HR 78",
    "Temp 98.6",
    "RR 16",
    "SpO2 97",
    "Pain 3",
    "Weight 82 kg",
    "BMI 27",
];

const RESULTS: [&str; 12] = [
    "WBC 12.3",
    "HGB 10.1",
    "HCT 31",
    "glucose 96",
    "creatinine 1.4",
    "BUN 28",
    "ALT 42",
    "AST 39",
    "INR 2.4",
    "LDL 160",
    "potassium 4.1",
    "sodium 138",
];

const PANELS: [(&str, &[&str]); 6] = [
    ("CBC", &["WBC", "RBC", "HGB", "HCT", "PLT", "MCV", "MCH"]),
    (
        "liver function",
        &["ALT", "AST", "ALP", "total bilirubin", "direct bilirubin", "albumin"],
    ),
    ("renal function", &["creatinine", "BUN", "eGFR", "uric acid"]),
    ("lipid panel", &["LDL", "HDL", "total cholesterol", "triglycerides"]),
    ("coagulation panel", &["PT", "PTT", "INR", "fibrinogen", "D-dimer"]),
    (
        "basic metabolic panel",
        &[
            "sodium",
            "potassium",
            "chloride",
            "bicarbonate",
            "calcium",
            "magnesium",
            "phosphate",
            "glucose",
            "anion gap",
        ],
    ),
];

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut chars = w.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn diagnosis_variants(c: &str) -> Vec<String> {
    vec![
        c.to_uppercase(),
        title_case(c),
        format!("h/o {c}"),
        format!("{c} (active)"),
        format!("known {c}"),
        format!("{c}, primary"),
        format!("{c} - confirmed"),
        format!("hx of {c}"),
    ]
}

fn medication_variants(c: &str) -> Vec<String> {
    vec![
        c.to_uppercase(),
        title_case(c),
        format!("{c} therapy"),
        format!("{c} (oral)"),
        format!("po {c}"),
    ]
}

fn symptom_variants(c: &str) -> Vec<String> {
    vec![c.to_uppercase(), title_case(c), format!("reports {c}")]
}

fn procedure_variants(c: &str) -> Vec<String> {
    vec![format!("{c} performed"), format!("{c} obtained")]
}

struct Builder {
    entities: Vec<(EntityType, String, String)>,
    relations: Vec<(serde_json::Value, RelationType, serde_json::Value, EntityType, EntityType)>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            entities: Vec::new(),
            relations: Vec::new(),
        }
    }

    fn entity(&mut self, etype: EntityType, name: &str) -> String {
        let handle = format!("e{}", self.entities.len());
        self.entities.push((etype, name.to_string(), handle.clone()));
        handle
    }

    fn relation(&mut self, src: &str, src_etype: EntityType, rtype: RelationType, dst: &str, dst_etype: EntityType) {
        self.relations.push((
            serde_json::Value::String(src.to_string()),
            rtype,
            serde_json::Value::String(dst.to_string()),
            src_etype,
            dst_etype,
        ));
    }

    fn response_json(&self) -> String {
        let entities: Vec<serde_json::Value> = self
            .entities
            .iter()
            .map(|(etype, name, handle)| {
                serde_json::json!({
                    "etype": etype,
                    "name": name,
                    "ref": handle,
                })
            })
            .collect();
        let relations: Vec<serde_json::Value> = self
            .relations
            .iter()
            .map(|(src, rtype, dst, src_etype, dst_etype)| {
                serde_json::json!({
                    "src_etype": src_etype,
                    "src": src,
                    "rtype": rtype,
                    "dst_etype": dst_etype,
                    "dst": dst,
                })
            })
            .collect();
        serde_json::json!({ "entities": entities, "relations": relations }).to_string()
    }
}

/// The scripted extraction scenario for the degenerate fixture patient.
pub fn degenerate_scenario() -> Vec<ScenarioEntry> {
    let mut b = Builder::new();
    const P1: &str = "Patient"; // table-derived node, referenced by name

    // canonical entities
    let dx: Vec<String> = DIAGNOSES.iter().map(|c| b.entity(EntityType::Diagnosis, c)).collect();
    let med: Vec<String> = MEDICATIONS.iter().map(|c| b.entity(EntityType::Medication, c)).collect();
    let sym: Vec<String> = SYMPTOMS.iter().map(|c| b.entity(EntityType::Symptom, c)).collect();
    let proc: Vec<String> = PROCEDURES.iter().map(|c| b.entity(EntityType::Procedure, c)).collect();
    let vit: Vec<String> = VITALS.iter().map(|c| b.entity(EntityType::VitalSign, c)).collect();
    let res: Vec<String> = RESULTS.iter().map(|c| b.entity(EntityType::LabResult, c)).collect();
    let dept = b.entity(EntityType::Department, "Emergency");

    // extra patient nodes (fragmentation)
    let p2 = b.entity(EntityType::Patient, "The Patient");
    let p3 = b.entity(EntityType::Patient, "Patient P0001");

    // per-parameter lab tests (over-extraction)
    let mut params: BTreeMap<&str, String> = BTreeMap::new();
    for (_, members) in PANELS {
        for param in members {
            let handle = b.entity(EntityType::LabTest, param);
            params.insert(param, handle);
        }
    }

    // verbatim duplicates: all diagnoses, all medications, three symptoms
    let dup_dx: Vec<String> = DIAGNOSES.iter().map(|c| b.entity(EntityType::Diagnosis, c)).collect();
    let dup_med: Vec<String> = MEDICATIONS.iter().map(|c| b.entity(EntityType::Medication, c)).collect();
    let dup_sym: Vec<String> = SYMPTOMS[..3].iter().map(|c| b.entity(EntityType::Symptom, c)).collect();

    // synonym surface forms
    let dx_vars: Vec<String> = DIAGNOSES
        .iter()
        .flat_map(|c| diagnosis_variants(c))
        .map(|v| b.entity(EntityType::Diagnosis, &v))
        .collect();
    let med_vars: Vec<String> = MEDICATIONS
        .iter()
        .flat_map(|c| medication_variants(c))
        .map(|v| b.entity(EntityType::Medication, &v))
        .collect();
    let sym_vars: Vec<String> = SYMPTOMS
        .iter()
        .flat_map(|c| symptom_variants(c))
        .map(|v| b.entity(EntityType::Symptom, &v))
        .collect();
    let proc_vars: Vec<String> = PROCEDURES
        .iter()
        .flat_map(|c| procedure_variants(c))
        .map(|v| b.entity(EntityType::Procedure, &v))
        .collect();

    assert_eq!(b.entities.len(), RAW_TOTAL - 1, "scripted entities plus the table patient");
    assert_eq!(dx_vars.len(), 56);
    assert_eq!(med_vars.len(), 40);
    assert_eq!(sym_vars.len(), 21);
    assert_eq!(proc_vars.len(), 16);

    // component 1: the main island around the table patient
    use EntityType as T;
    use RelationType as R;
    for d in dx.iter().chain(dup_dx.iter()).chain(dx_vars.iter()) {
        b.relation(P1, T::Patient, R::HasDiagnosis, d, T::Diagnosis);
    }
    for m in med.iter().chain(dup_med.iter()) {
        b.relation(P1, T::Patient, R::Prescribed, m, T::Medication);
    }
    for s in sym.iter().chain(dup_sym.iter()) {
        b.relation(P1, T::Patient, R::Shows, s, T::Symptom);
    }
    for p in &proc {
        b.relation(P1, T::Patient, R::Underwent, p, T::Procedure);
    }
    for v in &vit {
        b.relation(P1, T::Patient, R::HasVitalSign, v, T::VitalSign);
    }
    b.relation(P1, T::Patient, R::TreatedIn, &dept, T::Department);
    for param in PANELS[0].1 {
        b.relation(P1, T::Patient, R::TestedBy, &params[param], T::LabTest);
    }
    b.relation(&res[0], T::LabResult, R::ResultOf, &params["WBC"], T::LabTest);
    b.relation(&res[1], T::LabResult, R::ResultOf, &params["HGB"], T::LabTest);
    b.relation(&res[2], T::LabResult, R::ResultOf, &params["HCT"], T::LabTest);

    // component 2: second patient with the liver panel and half the
    // medication variants
    for param in PANELS[1].1 {
        b.relation(&p2, T::Patient, R::TestedBy, &params[param], T::LabTest);
    }
    b.relation(&res[6], T::LabResult, R::ResultOf, &params["ALT"], T::LabTest);
    b.relation(&res[7], T::LabResult, R::ResultOf, &params["AST"], T::LabTest);
    for m in &med_vars[..20] {
        b.relation(&p2, T::Patient, R::Prescribed, m, T::Medication);
    }

    // component 3: third patient with the renal panel and the rest
    for param in PANELS[2].1 {
        b.relation(&p3, T::Patient, R::TestedBy, &params[param], T::LabTest);
    }
    b.relation(&res[4], T::LabResult, R::ResultOf, &params["creatinine"], T::LabTest);
    b.relation(&res[5], T::LabResult, R::ResultOf, &params["BUN"], T::LabTest);
    for m in &med_vars[20..] {
        b.relation(&p3, T::Patient, R::Prescribed, m, T::Medication);
    }

    // component 4: orphan lipid island plus nine symptom variants
    for param in ["HDL", "total cholesterol", "triglycerides"] {
        b.relation(&params[param], T::LabTest, R::ResultOf, &params["LDL"], T::LabTest);
    }
    b.relation(&res[9], T::LabResult, R::ResultOf, &params["LDL"], T::LabTest);
    for w in sym_vars[..9].windows(2) {
        b.relation(&w[0], T::Symptom, R::Shows, &w[1], T::Symptom);
    }
    b.relation(&res[9], T::LabResult, R::Indicates, &sym_vars[0], T::Symptom);

    // component 5: orphan coagulation island plus twelve symptom variants
    for param in ["PTT", "INR", "fibrinogen", "D-dimer"] {
        b.relation(&params[param], T::LabTest, R::ResultOf, &params["PT"], T::LabTest);
    }
    b.relation(&res[8], T::LabResult, R::ResultOf, &params["INR"], T::LabTest);
    for w in sym_vars[9..].windows(2) {
        b.relation(&w[0], T::Symptom, R::Shows, &w[1], T::Symptom);
    }
    b.relation(&res[8], T::LabResult, R::Indicates, &sym_vars[9], T::Symptom);

    // component 6: orphan metabolic island plus eight procedure variants
    for param in [
        "potassium",
        "chloride",
        "bicarbonate",
        "calcium",
        "magnesium",
        "phosphate",
        "glucose",
        "anion gap",
    ] {
        b.relation(&params[param], T::LabTest, R::ResultOf, &params["sodium"], T::LabTest);
    }
    b.relation(&res[10], T::LabResult, R::ResultOf, &params["potassium"], T::LabTest);
    b.relation(&res[11], T::LabResult, R::ResultOf, &params["sodium"], T::LabTest);
    b.relation(&res[3], T::LabResult, R::ResultOf, &params["glucose"], T::LabTest);
    for w in proc_vars[..8].windows(2) {
        b.relation(&w[0], T::Procedure, R::Underwent, &w[1], T::Procedure);
    }
    b.relation(&res[3], T::LabResult, R::Indicates, &proc_vars[0], T::Procedure);

    // component 7: orphan chain of the remaining procedure variants
    for w in proc_vars[8..].windows(2) {
        b.relation(&w[0], T::Procedure, R::Underwent, &w[1], T::Procedure);
    }

    vec![ScenarioEntry {
        stage: "extract".into(),
        matcher: "".into(),
        responses: vec![b.response_json()],
        repeat_last: false,
    }]
}

/// Graph config matching what the degenerate scenario needs: the six-panel
/// lab map and the synonym entries folding every surface form back to its
/// canonical name.
pub fn degenerate_graph_config() -> GraphConfig {
    let mut panel_map = BTreeMap::new();
    for (panel, members) in PANELS {
        for param in members {
            panel_map.insert(param.to_lowercase(), panel.to_string());
        }
    }
    let mut synonym_map = BTreeMap::new();
    for c in DIAGNOSES {
        for v in diagnosis_variants(c) {
            synonym_map.insert(v.to_lowercase(), c.to_string());
        }
    }
    for c in MEDICATIONS {
        for v in medication_variants(c) {
            synonym_map.insert(v.to_lowercase(), c.to_string());
        }
    }
    for c in SYMPTOMS {
        for v in symptom_variants(c) {
            synonym_map.insert(v.to_lowercase(), c.to_string());
        }
    }
    for c in PROCEDURES {
        for v in procedure_variants(c) {
            synonym_map.insert(v.to_lowercase(), c.to_string());
        }
    }
    GraphConfig {
        version: "graph-config/degenerate-1".to_string(),
        panel_map,
        synonym_map,
        community_resolution: 1.0,
        community_seed: 7,
    }
}

/// Write the minimal bundle the degenerate patient loads from: free text
/// present (so extraction fires once), every structured table empty.
pub fn write_degenerate_bundle(dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("discharge_target.csv"),
        "patient_id,brief_hospital_course,discharge_instructions\n\
         P0001,Patient admitted with multiple chronic conditions.,Follow up in 1 week.\n",
    )?;
    std::fs::write(
        dir.join("discharge.csv"),
        "patient_id,text\nP0001,Comprehensive multi-system evaluation documented in chart.\n",
    )?;
    std::fs::write(dir.join("diagnosis.csv"), "patient_id,code,label,seq\n")?;
    std::fs::write(
        dir.join("edstays.csv"),
        "patient_id,stay_id,in_time,out_time,disposition\n",
    )?;
    std::fs::write(dir.join("radiology.csv"), "patient_id,text\n")?;
    std::fs::write(
        dir.join("triage.csv"),
        "patient_id,temperature,heart_rate,respiratory_rate,spo2,dbp,pain,acuity\n",
    )?;
    Ok(())
}
