//! Graph quality counters by direct enumeration.

use super::{EntityType, GraphQualityReport, PatientGraph};
use std::collections::BTreeMap;

/// Count entities, lab tests, patients, duplicate (type, name) pairs, and
/// connected components. `build_seconds` carries over from the graph's
/// stored report.
pub fn quality_report(graph: &PatientGraph) -> GraphQualityReport {
    let mut name_counts: BTreeMap<(EntityType, &str), usize> = BTreeMap::new();
    let mut lab_test_entities = 0;
    let mut patient_entities = 0;
    for entity in graph.entities.values() {
        *name_counts
            .entry((entity.etype, entity.canonical_name.as_str()))
            .or_insert(0) += 1;
        match entity.etype {
            EntityType::LabTest => lab_test_entities += 1,
            EntityType::Patient => patient_entities += 1,
            _ => {}
        }
    }
    let duplicate_entities = name_counts.values().map(|&c| c - 1).sum();

    GraphQualityReport {
        total_entities: graph.entities.len(),
        lab_test_entities,
        patient_entities,
        duplicate_entities,
        connected_components: graph.connected_components(),
        build_seconds: graph.quality.build_seconds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Provenance;
    use std::collections::BTreeMap as Attrs;

    #[test]
    fn empty_graph_reports_zeros() {
        let g = PatientGraph::new("P1");
        let q = quality_report(&g);
        assert_eq!(q.total_entities, 0);
        assert_eq!(q.lab_test_entities, 0);
        assert_eq!(q.patient_entities, 0);
        assert_eq!(q.duplicate_entities, 0);
        assert_eq!(q.connected_components, 0);
    }

    #[test]
    fn duplicates_count_extras_per_name_group() {
        let mut g = PatientGraph::new("P1");
        for _ in 0..3 {
            g.add_entity(
                EntityType::Diagnosis,
                "pneumonia",
                Attrs::new(),
                Provenance::new("discharge", 0),
            );
        }
        g.add_entity(
            EntityType::Symptom,
            "pneumonia",
            Attrs::new(),
            Provenance::new("discharge", 0),
        );
        let q = quality_report(&g);
        // three same-type copies contribute 2; the symptom namesake is distinct
        assert_eq!(q.duplicate_entities, 2);
        assert_eq!(q.total_entities, 4);
    }
}
