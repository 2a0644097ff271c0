//! Detect the community hierarchy on a small graph and summarize each
//! community extractively.
//!
//! ```bash
//! cargo run --example communities
//! ```

use chartcheck::graph::{
    detect_communities, modularity, summarize_communities, EntityType, PatientGraph, Provenance,
    RelationType,
};
use std::collections::BTreeMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // two clinical clusters bridged by the patient node
    let mut graph = PatientGraph::new("P0001");
    let prov = || Provenance::new("discharge", 0);
    let patient = graph.add_entity(EntityType::Patient, "Patient", Default::default(), prov());

    let respiratory = [
        (EntityType::Diagnosis, "pneumonia"),
        (EntityType::Medication, "azithromycin"),
        (EntityType::Symptom, "productive cough"),
    ];
    let cardiac = [
        (EntityType::Diagnosis, "atrial fibrillation"),
        (EntityType::Medication, "warfarin"),
        (EntityType::Symptom, "palpitations"),
    ];
    for cluster in [&respiratory, &cardiac] {
        let ids: Vec<String> = cluster
            .iter()
            .map(|(etype, name)| graph.add_entity(*etype, name, Default::default(), prov()))
            .collect();
        for i in 0..ids.len() {
            for j in (i + 1)..ids.len() {
                graph.add_relation(&ids[i], &ids[j], RelationType::Indicates, prov());
            }
        }
        graph.add_relation(&patient, &ids[0], RelationType::HasDiagnosis, prov());
    }

    graph.communities = detect_communities(&graph, 7, 1.0);
    summarize_communities(&mut graph, None)?;

    let levels = graph.communities.iter().map(|c| c.level).max().unwrap_or(0) + 1;
    println!("{} hierarchy level(s)", levels);
    for community in &graph.communities {
        println!(
            "\n[{}] level {} · {} members",
            community.id,
            community.level,
            community.member_entity_ids.len()
        );
        println!("  {}", community.summary);
    }

    let assignment: BTreeMap<String, usize> = graph
        .communities
        .iter()
        .filter(|c| c.level == 0)
        .enumerate()
        .flat_map(|(k, c)| c.member_entity_ids.iter().map(move |id| (id.clone(), k)))
        .collect();
    println!("\nlevel-0 modularity: {:.4}", modularity(&graph, &assignment, 1.0));
    Ok(())
}
