//! The three normalization passes.
//!
//! 1. lab panel consolidation: individual lab parameters merge into their
//!    configured panel entity (WBC/RBC/HGB/HCT into CBC, ...);
//! 2. patient uniqueness: all PATIENT nodes merge into one named
//!    "Patient", and every patient-less component gets linked to it;
//! 3. terminology canonicalization: synonym-mapped and duplicate
//!    (type, name) entities merge, uniting attributes (conflicts kept on
//!    record) and provenance.
//!
//! Every pass only ever shrinks the entity set, keeps relation endpoints
//! resolved, and is idempotent.

use super::{
    AttributeConflict, Entity, EntityType, GraphError, PatientGraph, Provenance, Relation,
    RelationType,
};
use std::collections::{BTreeMap, BTreeSet};

/// A planned merge: `members` collapse into one entity of `etype` named
/// `name`, inserted at the first member's position.
struct MergeGroup {
    etype: EntityType,
    name: String,
    members: Vec<String>,
}

/// Rebuild the graph applying the merge plan. Relations re-point to merged
/// ids; self-loops drop; parallel duplicates (same src, dst, rtype)
/// collapse to the first occurrence.
fn apply_merges(graph: PatientGraph, plan: Vec<MergeGroup>) -> PatientGraph {
    if plan.is_empty() {
        return graph;
    }

    let patient_id = graph.patient_id.clone();
    let mut member_to_group: BTreeMap<String, usize> = BTreeMap::new();
    for (gi, group) in plan.iter().enumerate() {
        for m in &group.members {
            member_to_group.insert(m.clone(), gi);
        }
    }

    let mut merged_ids: Vec<Option<String>> = vec![None; plan.len()];
    let mut new_entities: indexmap::IndexMap<String, Entity> = indexmap::IndexMap::new();
    let mut remap: BTreeMap<String, String> = BTreeMap::new();

    for (id, entity) in &graph.entities {
        match member_to_group.get(id) {
            None => {
                remap.insert(id.clone(), id.clone());
                new_entities.insert(id.clone(), entity.clone());
            }
            Some(&gi) => {
                let group = &plan[gi];
                let merged_id = match &merged_ids[gi] {
                    Some(existing) => existing.clone(),
                    None => {
                        let mut mid =
                            PatientGraph::entity_base_id(&patient_id, group.etype, &group.name);
                        let mut n = 1;
                        while new_entities.contains_key(&mid) {
                            n += 1;
                            mid = format!(
                                "{}-{n}",
                                PatientGraph::entity_base_id(&patient_id, group.etype, &group.name)
                            );
                        }
                        merged_ids[gi] = Some(mid.clone());
                        new_entities.insert(
                            mid.clone(),
                            Entity {
                                id: mid.clone(),
                                etype: group.etype,
                                canonical_name: group.name.clone(),
                                attributes: BTreeMap::new(),
                                provenance: Vec::new(),
                                attribute_conflicts: Vec::new(),
                            },
                        );
                        mid
                    }
                };
                remap.insert(id.clone(), merged_id.clone());
                let target = new_entities.get_mut(&merged_id).expect("just inserted");
                for (k, v) in &entity.attributes {
                    match target.attributes.get(k) {
                        None => {
                            target.attributes.insert(k.clone(), v.clone());
                        }
                        Some(kept) if kept != v => {
                            target.attribute_conflicts.push(AttributeConflict {
                                key: k.clone(),
                                kept: kept.clone(),
                                dropped: v.clone(),
                            });
                        }
                        Some(_) => {}
                    }
                }
                for p in &entity.provenance {
                    if !target.provenance.contains(p) {
                        target.provenance.push(p.clone());
                    }
                }
                target
                    .attribute_conflicts
                    .extend(entity.attribute_conflicts.iter().cloned());
            }
        }
    }

    let mut new_relations: Vec<Relation> = Vec::new();
    let mut seen: BTreeSet<(String, String, RelationType)> = BTreeSet::new();
    for r in &graph.relations {
        let src = remap.get(&r.src).cloned().unwrap_or_else(|| r.src.clone());
        let dst = remap.get(&r.dst).cloned().unwrap_or_else(|| r.dst.clone());
        if src == dst {
            continue;
        }
        if seen.insert((src.clone(), dst.clone(), r.rtype)) {
            new_relations.push(Relation {
                src,
                dst,
                rtype: r.rtype,
                provenance: r.provenance.clone(),
            });
        }
    }

    PatientGraph {
        graph_schema_version: graph.graph_schema_version,
        patient_id,
        entities: new_entities,
        relations: new_relations,
        communities: graph.communities,
        quality: graph.quality,
    }
}

/// Merge LAB_TEST parameter entities into their configured panels.
///
/// `panel_map` maps lowercase parameter names to panel names. A pre-existing
/// entity already named like the panel joins the merge, so the pass never
/// introduces a duplicate.
pub fn normalize_lab_panels(
    graph: PatientGraph,
    panel_map: &BTreeMap<String, String>,
) -> PatientGraph {
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (id, entity) in &graph.entities {
        if entity.etype != EntityType::LabTest {
            continue;
        }
        if let Some(panel) = panel_map.get(&entity.canonical_name.to_lowercase()) {
            groups.entry(panel.clone()).or_default().push(id.clone());
        }
    }
    if groups.is_empty() {
        return graph;
    }

    // include an existing panel-named entity so the merge lands on it
    let mut plan = Vec::new();
    for (panel, mut members) in groups {
        for (id, entity) in &graph.entities {
            if entity.etype == EntityType::LabTest
                && entity.canonical_name.eq_ignore_ascii_case(&panel)
                && !members.contains(id)
            {
                members.push(id.clone());
            }
        }
        // keep insertion order inside the group
        members.sort_by_key(|id| graph.entities.get_index_of(id).unwrap_or(usize::MAX));
        plan.push(MergeGroup {
            etype: EntityType::LabTest,
            name: panel,
            members,
        });
    }
    apply_merges(graph, plan)
}

/// Merge all PATIENT entities into a single node named "Patient" and link
/// every patient-less connected component to it with a type-appropriate
/// relation.
pub fn enforce_patient_uniqueness(graph: PatientGraph) -> Result<PatientGraph, GraphError> {
    let patients: Vec<String> = graph
        .entities
        .values()
        .filter(|e| e.etype == EntityType::Patient)
        .map(|e| e.id.clone())
        .collect();
    if patients.is_empty() {
        return Err(GraphError::NoPatientEntity);
    }

    let mut graph = apply_merges(
        graph,
        vec![MergeGroup {
            etype: EntityType::Patient,
            name: "Patient".to_string(),
            members: patients,
        }],
    );

    // connect orphan components to the patient
    let patient_id = graph
        .entities
        .values()
        .find(|e| e.etype == EntityType::Patient)
        .map(|e| e.id.clone())
        .expect("patient survives the merge");

    let components = component_assignment(&graph);
    let patient_component = components[&patient_id];
    let mut anchors: BTreeMap<usize, String> = BTreeMap::new();
    for (id, &comp) in &components {
        if comp != patient_component {
            anchors
                .entry(comp)
                .and_modify(|a| {
                    if anchor_rank(&graph, id) < anchor_rank(&graph, a) {
                        *a = id.clone();
                    }
                })
                .or_insert_with(|| id.clone());
        }
    }
    for (_, anchor) in anchors {
        let rtype = link_type(graph.entities[&anchor].etype);
        graph.add_relation(
            &patient_id,
            &anchor,
            rtype,
            Provenance::new("normalization", 0),
        );
    }
    Ok(graph)
}

fn anchor_rank<'a>(graph: &'a PatientGraph, id: &'a str) -> (u8, &'a str) {
    let priority = match graph.entities[id].etype {
        EntityType::Diagnosis => 0,
        EntityType::Medication => 1,
        EntityType::LabTest => 2,
        EntityType::Procedure => 3,
        EntityType::Symptom => 4,
        EntityType::VitalSign => 5,
        EntityType::LabResult => 6,
        EntityType::Department => 7,
        EntityType::Patient => 8,
    };
    (priority, id)
}

fn link_type(etype: EntityType) -> RelationType {
    match etype {
        EntityType::Diagnosis => RelationType::HasDiagnosis,
        EntityType::Medication => RelationType::Prescribed,
        EntityType::Symptom => RelationType::Shows,
        EntityType::Procedure => RelationType::Underwent,
        EntityType::VitalSign => RelationType::HasVitalSign,
        EntityType::LabTest | EntityType::LabResult => RelationType::TestedBy,
        EntityType::Department => RelationType::TreatedIn,
        EntityType::Patient => RelationType::TreatedIn,
    }
}

fn component_assignment(graph: &PatientGraph) -> BTreeMap<String, usize> {
    let ids: Vec<&String> = graph.entities.keys().collect();
    let index: BTreeMap<&str, usize> = ids
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
    for r in &graph.relations {
        let (a, b) = (index[r.src.as_str()], index[r.dst.as_str()]);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    ids.iter()
        .enumerate()
        .map(|(i, id)| ((*id).clone(), find(&mut parent, i)))
        .collect()
}

/// Fold synonymous and duplicate entity names together.
///
/// Each entity's name maps through `synonym_map` (lowercase surface form to
/// canonical form); entities then group by (type, case-folded name) and
/// every group collapses to one entity named after its first member.
/// Attribute maps union with conflicts preserved.
pub fn canonicalize_terminology(
    graph: PatientGraph,
    synonym_map: &BTreeMap<String, String>,
) -> PatientGraph {
    let mut groups: indexmap::IndexMap<(EntityType, String), (String, Vec<String>)> =
        indexmap::IndexMap::new();
    let mut any_change = false;

    for (id, entity) in &graph.entities {
        let target = synonym_map
            .get(&entity.canonical_name.to_lowercase())
            .cloned()
            .unwrap_or_else(|| entity.canonical_name.clone());
        if target != entity.canonical_name {
            any_change = true;
        }
        let key = (entity.etype, target.to_lowercase());
        groups
            .entry(key)
            .and_modify(|(_, members)| {
                members.push(id.clone());
                any_change = true;
            })
            .or_insert_with(|| (target, vec![id.clone()]));
    }
    if !any_change {
        return graph;
    }

    let plan: Vec<MergeGroup> = groups
        .into_iter()
        .filter(|((_, _), (name, members))| {
            members.len() > 1 || graph.entities[&members[0]].canonical_name != *name
        })
        .map(|((etype, _), (name, members))| MergeGroup {
            etype,
            name,
            members,
        })
        .collect();
    apply_merges(graph, plan)
}

/// Run the full pipeline: panels, patient uniqueness, terminology, then a
/// refreshed quality report.
pub fn full_normalize(
    graph: PatientGraph,
    panel_map: &BTreeMap<String, String>,
    synonym_map: &BTreeMap<String, String>,
) -> Result<PatientGraph, GraphError> {
    let build_seconds = graph.quality.build_seconds;
    let graph = normalize_lab_panels(graph, panel_map);
    let graph = enforce_patient_uniqueness(graph)?;
    let mut graph = canonicalize_terminology(graph, synonym_map);
    graph.quality = super::quality_report(&graph);
    graph.quality.build_seconds = build_seconds;
    Ok(graph)
}
