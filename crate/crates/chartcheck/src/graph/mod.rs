//! Per-patient knowledge graph: typed entities and relations extracted from
//! the record bundle, normalized into a connected, duplicate-free graph,
//! clustered into hierarchical communities.
//!
//! Raw extraction is deliberately permissive — it keeps duplicate
//! (type, name) pairs under disambiguated ids, multiple PATIENT nodes, and
//! per-parameter lab tests, because that is what unconstrained extraction
//! produces. The normalization passes then merge lab parameters into
//! panels, enforce a single PATIENT node with full connectivity, and fold
//! synonymous surface forms together, preserving provenance through every
//! merge.

mod build;
mod community;
pub mod degenerate;
mod normalize;
mod quality;

pub use build::extract_raw_graph;
pub use community::{detect_communities, modularity, summarize_communities};
pub use normalize::{
    canonicalize_terminology, enforce_patient_uniqueness, full_normalize, normalize_lab_panels,
};
pub use quality::quality_report;

use crate::llm::LlmError;
use crate::util::short_sha;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

pub const GRAPH_SCHEMA_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("graph has no PATIENT entity")]
    NoPatientEntity,
    #[error("llm: {0}")]
    Llm(#[from] LlmError),
    #[error("extraction output unusable after retries: {0}")]
    Schema(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
}

/// The nine entity types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityType {
    Patient,
    Diagnosis,
    Medication,
    LabTest,
    LabResult,
    VitalSign,
    Symptom,
    Procedure,
    Department,
}

impl EntityType {
    pub const ALL: [EntityType; 9] = [
        EntityType::Patient,
        EntityType::Diagnosis,
        EntityType::Medication,
        EntityType::LabTest,
        EntityType::LabResult,
        EntityType::VitalSign,
        EntityType::Symptom,
        EntityType::Procedure,
        EntityType::Department,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EntityType::Patient => "PATIENT",
            EntityType::Diagnosis => "DIAGNOSIS",
            EntityType::Medication => "MEDICATION",
            EntityType::LabTest => "LAB_TEST",
            EntityType::LabResult => "LAB_RESULT",
            EntityType::VitalSign => "VITAL_SIGN",
            EntityType::Symptom => "SYMPTOM",
            EntityType::Procedure => "PROCEDURE",
            EntityType::Department => "DEPARTMENT",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The ten relation types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationType {
    HasDiagnosis,
    Prescribed,
    Shows,
    Underwent,
    HasVitalSign,
    TestedBy,
    ResultOf,
    TreatedIn,
    Indicates,
    ContraindicatedWith,
}

impl RelationType {
    pub const ALL: [RelationType; 10] = [
        RelationType::HasDiagnosis,
        RelationType::Prescribed,
        RelationType::Shows,
        RelationType::Underwent,
        RelationType::HasVitalSign,
        RelationType::TestedBy,
        RelationType::ResultOf,
        RelationType::TreatedIn,
        RelationType::Indicates,
        RelationType::ContraindicatedWith,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RelationType::HasDiagnosis => "has_diagnosis",
            RelationType::Prescribed => "prescribed",
            RelationType::Shows => "shows",
            RelationType::Underwent => "underwent",
            RelationType::HasVitalSign => "has_vital_sign",
            RelationType::TestedBy => "tested_by",
            RelationType::ResultOf => "result_of",
            RelationType::TreatedIn => "treated_in",
            RelationType::Indicates => "indicates",
            RelationType::ContraindicatedWith => "contraindicated_with",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a graph element came from: source table plus row ordinal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub table: String,
    pub row: usize,
}

impl Provenance {
    pub fn new(table: &str, row: usize) -> Self {
        Provenance {
            table: table.to_string(),
            row,
        }
    }
}

/// Attribute values that disagreed during a merge; the kept value wins,
/// the dropped one stays on record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeConflict {
    pub key: String,
    pub kept: String,
    pub dropped: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub etype: EntityType,
    pub canonical_name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
    pub provenance: Vec<Provenance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attribute_conflicts: Vec<AttributeConflict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub src: String,
    pub dst: String,
    pub rtype: RelationType,
    pub provenance: Provenance,
}

/// One community at one hierarchy level. Level 0 is finest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub id: String,
    pub level: u32,
    pub member_entity_ids: Vec<String>,
    pub summary: String,
}

/// Direct enumeration counters over a graph. After full normalization,
/// patient_entities = 1, duplicate_entities = 0, connected_components = 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphQualityReport {
    pub total_entities: usize,
    pub lab_test_entities: usize,
    pub patient_entities: usize,
    pub duplicate_entities: usize,
    pub connected_components: usize,
    pub build_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientGraph {
    pub graph_schema_version: String,
    pub patient_id: String,
    pub entities: IndexMap<String, Entity>,
    pub relations: Vec<Relation>,
    pub communities: Vec<Community>,
    pub quality: GraphQualityReport,
}

impl PatientGraph {
    pub fn new(patient_id: &str) -> Self {
        PatientGraph {
            graph_schema_version: GRAPH_SCHEMA_VERSION.to_string(),
            patient_id: patient_id.to_string(),
            entities: IndexMap::new(),
            relations: Vec::new(),
            communities: Vec::new(),
            quality: GraphQualityReport::default(),
        }
    }

    /// Stable id for an entity: hash of (patient, type, name).
    pub fn entity_base_id(patient_id: &str, etype: EntityType, name: &str) -> String {
        short_sha(&format!("{patient_id}|{etype}|{name}"))
    }

    /// Append an entity, keeping duplicates of the same (type, name) under
    /// `-2`, `-3`, ... suffixed ids. Returns the assigned id.
    pub fn add_entity(
        &mut self,
        etype: EntityType,
        name: &str,
        attributes: BTreeMap<String, String>,
        provenance: Provenance,
    ) -> String {
        let base = Self::entity_base_id(&self.patient_id, etype, name);
        let mut id = base.clone();
        let mut n = 1;
        while self.entities.contains_key(&id) {
            n += 1;
            id = format!("{base}-{n}");
        }
        self.entities.insert(
            id.clone(),
            Entity {
                id: id.clone(),
                etype,
                canonical_name: name.to_string(),
                attributes,
                provenance: vec![provenance],
                attribute_conflicts: Vec::new(),
            },
        );
        id
    }

    /// Append a relation between existing entities.
    pub fn add_relation(
        &mut self,
        src: &str,
        dst: &str,
        rtype: RelationType,
        provenance: Provenance,
    ) {
        debug_assert!(self.entities.contains_key(src), "unknown src {src}");
        debug_assert!(self.entities.contains_key(dst), "unknown dst {dst}");
        self.relations.push(Relation {
            src: src.to_string(),
            dst: dst.to_string(),
            rtype,
            provenance,
        });
    }

    /// First entity with the given type and exact name.
    pub fn find_entity(&self, etype: EntityType, name: &str) -> Option<&Entity> {
        self.entities
            .values()
            .find(|e| e.etype == etype && e.canonical_name == name)
    }

    /// Undirected neighbor ids of an entity.
    pub fn neighbors(&self, id: &str) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.relations {
            if r.src == id {
                out.push(&r.dst);
            } else if r.dst == id {
                out.push(&r.src);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Number of connected components over the undirected relation graph;
    /// entities with no relations count as singleton components.
    pub fn connected_components(&self) -> usize {
        let ids: Vec<&String> = self.entities.keys().collect();
        if ids.is_empty() {
            return 0;
        }
        let index: std::collections::HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for r in &self.relations {
            if let (Some(&a), Some(&b)) = (index.get(r.src.as_str()), index.get(r.dst.as_str())) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
        let mut roots = std::collections::BTreeSet::new();
        for i in 0..ids.len() {
            let root = find(&mut parent, i);
            roots.insert(root);
        }
        roots.len()
    }

    /// Write the graph as a single self-describing JSON document.
    pub fn save(&self, path: &std::path::Path) -> Result<(), GraphError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| GraphError::Format(format!("serialize graph: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path)?;
        let graph: PatientGraph = serde_json::from_str(&text)
            .map_err(|e| GraphError::Format(format!("parse graph: {e}")))?;
        if graph.graph_schema_version != GRAPH_SCHEMA_VERSION {
            return Err(GraphError::Format(format!(
                "unsupported graph schema version {}",
                graph.graph_schema_version
            )));
        }
        Ok(graph)
    }
}
