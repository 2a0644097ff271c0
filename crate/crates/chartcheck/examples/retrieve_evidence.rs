//! Embed a sentence and assemble its evidence context: top-k entities by
//! cosine similarity, one-hop neighbors, relations, community reports.
//!
//! ```bash
//! cargo run --example retrieve_evidence
//! ```

use chartcheck::config::GraphConfig;
use chartcheck::graph::{detect_communities, full_normalize, summarize_communities, extract_raw_graph};
use chartcheck::ingest::{generate_fixture, load_bundle};
use chartcheck::retrieval::{embed, retrieve_context, HashingEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // similarity behaves like you'd hope on near-duplicates
    let query = embed("aspirin 81 mg", 256);
    println!(
        "cosine(\"aspirin 81 mg\", \"aspirin 81mg\")      = {:.4}",
        query.cosine(&embed("aspirin 81mg", 256))
    );
    println!(
        "cosine(\"aspirin 81 mg\", \"chest radiograph\") = {:.4}",
        query.cosine(&embed("chest radiograph", 256))
    );

    // a real patient graph from tables
    let dir = tempfile::tempdir()?;
    generate_fixture(42, 1, dir.path())?;
    let record = load_bundle(dir.path(), "P0001")?;
    let cfg = GraphConfig::default();
    let raw = extract_raw_graph(&record, None, 3)?;
    let mut graph = full_normalize(raw, &cfg.panel_map, &cfg.synonym_map)?;
    graph.communities = detect_communities(&graph, cfg.community_seed, cfg.community_resolution);
    summarize_communities(&mut graph, None)?;

    let embedder = HashingEmbedder::new(256);
    let sentence = "Patient was diagnosed with pneumonia on arrival.";
    let context = retrieve_context(sentence, 0, &graph, 5, &embedder, 4000)?;

    println!("\nsentence: {sentence}");
    println!("context ({} chars):\n{}", context.rendered_text.len(), context.rendered_text);
    Ok(())
}
