//! Per-sentence evidence assembly from the patient graph.
//!
//! The sentence embeds into a fixed-dimension vector (character n-gram
//! feature hashing, L2-normalized — no network, no model weights); entities
//! rank by cosine similarity against their rendered text. The top-k become
//! hop 0, their graph neighbors hop 1; relations among included entities
//! and the community reports of hop-0 members complete the context. The
//! rendered text follows a fixed order — entities by rank, relations
//! lexicographic, reports by community id — under a hard character budget
//! that truncates reports first, then hop-1 entities, never hop 0.

use crate::graph::{Entity, PatientGraph, Relation};
use crate::util::fnv1a;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("graph has no entities")]
    EmptyGraph,
    #[error("embedding backend failure: {0}")]
    EmbeddingBackend(String),
}

/// Fixed-length L2-normalized embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "dimension mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a as f64) * (*b as f64))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| (*v as f64) * (*v as f64))
            .sum::<f64>()
            .sqrt()
    }
}

/// Text embedding behind a swappable interface; the default backend is
/// local and deterministic, a remote backend can slot in via config.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;
    fn dim(&self) -> usize;
}

/// Character n-gram (3..=5) plus word-token feature hashing with signed
/// buckets, L2-normalized. Deterministic across runs and platforms.
pub struct HashingEmbedder {
    pub dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        HashingEmbedder { dim }
    }

    fn accumulate(&self, values: &mut [f32], token: &[u8]) {
        let h = fnv1a(token);
        let bucket = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
        values[bucket] += sign;
    }
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let normalized = text.to_lowercase();
        let bytes = normalized.as_bytes();
        let mut values = vec![0.0f32; self.dim];
        for n in 3..=5usize {
            if bytes.len() >= n {
                for window in bytes.windows(n) {
                    self.accumulate(&mut values, window);
                }
            }
        }
        for word in normalized.split_whitespace() {
            self.accumulate(&mut values, word.as_bytes());
        }
        // signed features can cancel each other out on tiny inputs; keep
        // the unit-norm contract with a deterministic fallback feature
        if !text.is_empty() && values.iter().all(|v| *v == 0.0) {
            let bucket = (fnv1a(bytes) % self.dim as u64) as usize;
            values[bucket] = 1.0;
        }
        let norm = values.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v = (*v as f64 / norm) as f32;
            }
        }
        Ok(EmbeddingVector { values })
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Remote embedding over an OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedder {
    pub url: String,
    pub model: String,
    pub token: Option<String>,
    pub dim: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, model: &str, token: Option<String>, dim: usize) -> Self {
        RemoteEmbedder {
            url: format!("{}/embeddings", base_url.trim_end_matches('/')),
            model: model.to_string(),
            token,
            dim,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let body = serde_json::json!({"model": self.model, "input": text});
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| RetrievalError::EmbeddingBackend(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(RetrievalError::EmbeddingBackend(format!(
                "HTTP {}",
                resp.status()
            )));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| RetrievalError::EmbeddingBackend(e.to_string()))?;
        let raw = value["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| RetrievalError::EmbeddingBackend("missing embedding".into()))?;
        let values: Vec<f32> = raw.iter().filter_map(|v| v.as_f64()).map(|v| v as f32).collect();
        if values.len() != self.dim {
            return Err(RetrievalError::EmbeddingBackend(format!(
                "expected dim {}, got {}",
                self.dim,
                values.len()
            )));
        }
        Ok(EmbeddingVector { values })
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Default local embedding at dimension `dim`.
pub fn embed(text: &str, dim: usize) -> EmbeddingVector {
    HashingEmbedder::new(dim).embed(text).expect("local embedding is infallible")
}

/// Build the configured embedder: local hashing by default, remote opt-in.
pub fn embedder_from_config(cfg: &crate::config::RetrievalConfig) -> Box<dyn Embedder> {
    match cfg.embedding {
        crate::config::EmbeddingKind::Local => Box::new(HashingEmbedder::new(cfg.embedding_dim)),
        crate::config::EmbeddingKind::Remote => Box::new(RemoteEmbedder::new(
            &cfg.embedding_base_url,
            &cfg.embedding_model,
            std::env::var(&cfg.embedding_token_env).ok(),
            cfg.embedding_dim,
        )),
    }
}

/// One ranked entity in a context: hop 0 came from similarity search,
/// hop 1 from neighbor expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub entity_id: String,
    pub similarity: f64,
    pub hop: u8,
}

/// Everything handed to the judge for one sentence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceContext {
    pub sentence_index: usize,
    pub entities: Vec<EntityCandidate>,
    pub relations: Vec<Relation>,
    pub community_reports: Vec<(String, String)>,
    pub rendered_text: String,
}

/// Text an entity exposes to similarity search: its name plus attributes.
fn entity_text(entity: &Entity) -> String {
    let mut text = entity.canonical_name.clone();
    for (k, v) in &entity.attributes {
        text.push(' ');
        text.push_str(k);
        text.push(' ');
        text.push_str(v);
    }
    text
}

/// Assemble the evidence context for one sentence.
pub fn retrieve_context(
    sentence: &str,
    index: usize,
    graph: &PatientGraph,
    k: usize,
    embedder: &dyn Embedder,
    context_budget: usize,
) -> Result<EvidenceContext, RetrievalError> {
    assert!(k >= 1, "k must be at least 1");
    if graph.entities.is_empty() {
        return Err(RetrievalError::EmptyGraph);
    }

    let query = embedder.embed(sentence)?;
    let mut scored: Vec<(String, f64)> = Vec::with_capacity(graph.entities.len());
    for (id, entity) in &graph.entities {
        let sim = embedder.embed(&entity_text(entity))?.cosine(&query);
        scored.push((id.clone(), sim));
    }
    // descending similarity, ties by ascending entity id
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });

    let hop0: Vec<(String, f64)> = scored.iter().take(k).cloned().collect();
    let hop0_set: std::collections::BTreeSet<&str> =
        hop0.iter().map(|(id, _)| id.as_str()).collect();

    let mut hop1: Vec<String> = Vec::new();
    for (id, _) in &hop0 {
        for neighbor in graph.neighbors(id) {
            if !hop0_set.contains(neighbor) && !hop1.iter().any(|h| h == neighbor) {
                hop1.push(neighbor.to_string());
            }
        }
    }
    hop1.sort_unstable();

    let similarity_of = |id: &str| scored.iter().find(|(s, _)| s == id).map(|(_, v)| *v).unwrap_or(0.0);

    let mut entities: Vec<EntityCandidate> = hop0
        .iter()
        .map(|(id, sim)| EntityCandidate {
            entity_id: id.clone(),
            similarity: *sim,
            hop: 0,
        })
        .collect();
    entities.extend(hop1.iter().map(|id| EntityCandidate {
        entity_id: id.clone(),
        similarity: similarity_of(id),
        hop: 1,
    }));

    let included: std::collections::BTreeSet<&str> =
        entities.iter().map(|c| c.entity_id.as_str()).collect();
    let mut relations: Vec<Relation> = graph
        .relations
        .iter()
        .filter(|r| included.contains(r.src.as_str()) && included.contains(r.dst.as_str()))
        .cloned()
        .collect();
    relations.sort_by_key(|a| render_relation(graph, a));

    let mut community_reports: Vec<(String, String)> = graph
        .communities
        .iter()
        .filter(|c| {
            !c.summary.is_empty()
                && c.member_entity_ids.iter().any(|id| hop0_set.contains(id.as_str()))
        })
        .map(|c| (c.id.clone(), c.summary.clone()))
        .collect();
    community_reports.sort_by(|a, b| a.0.cmp(&b.0));

    let mut context = EvidenceContext {
        sentence_index: index,
        entities,
        relations,
        community_reports,
        rendered_text: String::new(),
    };
    render_with_budget(&mut context, graph, context_budget);
    Ok(context)
}

fn render_relation(graph: &PatientGraph, r: &Relation) -> String {
    fn name<'a>(graph: &'a PatientGraph, id: &'a str) -> &'a str {
        graph
            .entities
            .get(id)
            .map(|e| e.canonical_name.as_str())
            .unwrap_or(id)
    }
    format!(
        "{} -{}-> {}",
        name(graph, &r.src),
        r.rtype,
        name(graph, &r.dst)
    )
}

/// Render the context under the character budget: community reports drop
/// first (from the end), then hop-1 entities; hop-0 entities always stay.
fn render_with_budget(context: &mut EvidenceContext, graph: &PatientGraph, budget: usize) {
    loop {
        let text = render(context, graph);
        if text.len() <= budget {
            context.rendered_text = text;
            return;
        }
        if !context.community_reports.is_empty() {
            context.community_reports.pop();
            continue;
        }
        if let Some(pos) = context.entities.iter().rposition(|c| c.hop == 1) {
            let removed = context.entities.remove(pos);
            context
                .relations
                .retain(|r| r.src != removed.entity_id && r.dst != removed.entity_id);
            continue;
        }
        // nothing left to drop except hop 0: keep it even over budget
        context.rendered_text = text;
        return;
    }
}

fn render(context: &EvidenceContext, graph: &PatientGraph) -> String {
    let mut out = String::from("ENTITIES:\n");
    for c in &context.entities {
        let entity = &graph.entities[&c.entity_id];
        let mut attrs = String::new();
        if !entity.attributes.is_empty() {
            let pairs: Vec<String> = entity
                .attributes
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            attrs = format!(" {{{}}}", pairs.join("; "));
        }
        out.push_str(&format!(
            "- [ent:{}] {} {}{} (hop {}, sim {:.4})\n",
            c.entity_id, entity.etype, entity.canonical_name, attrs, c.hop, c.similarity
        ));
    }
    out.push_str("RELATIONS:\n");
    for r in &context.relations {
        out.push_str(&format!("- {}\n", render_relation(graph, r)));
    }
    out.push_str("COMMUNITY REPORTS:\n");
    for (id, summary) in &context.community_reports {
        out.push_str(&format!("- [community {id}] {summary}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityType, Provenance, RelationType};
    use std::collections::BTreeMap;

    #[test]
    fn embedding_is_deterministic_and_normalized() {
        let a = embed("aspirin 81 mg", 256);
        let b = embed("aspirin 81 mg", 256);
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert_eq!(a.dim(), 256);
    }

    #[test]
    fn near_duplicate_text_ranks_above_unrelated_text() {
        let query = embed("aspirin 81 mg", 256);
        let near = embed("aspirin 81mg", 256);
        let far = embed("chest radiograph", 256);
        assert!(query.cosine(&near) > query.cosine(&far));
    }

    #[test]
    fn empty_text_embeds_to_zero_vector() {
        let z = embed("", 64);
        assert_eq!(z.norm(), 0.0);
    }

    fn small_graph() -> PatientGraph {
        let mut g = PatientGraph::new("P1");
        let p = g.add_entity(
            EntityType::Patient,
            "Patient",
            BTreeMap::new(),
            Provenance::new("discharge_target", 0),
        );
        let mut attrs = BTreeMap::new();
        attrs.insert("dose".to_string(), "500 mg".to_string());
        let med = g.add_entity(
            EntityType::Medication,
            "Azithromycin",
            attrs,
            Provenance::new("discharge", 0),
        );
        let dx = g.add_entity(
            EntityType::Diagnosis,
            "Pneumonia",
            BTreeMap::new(),
            Provenance::new("diagnosis", 0),
        );
        let sym = g.add_entity(
            EntityType::Symptom,
            "productive cough",
            BTreeMap::new(),
            Provenance::new("discharge", 0),
        );
        let vit = g.add_entity(
            EntityType::VitalSign,
            "Temp 98.6",
            BTreeMap::new(),
            Provenance::new("triage", 0),
        );
        let prov = || Provenance::new("discharge", 0);
        g.add_relation(&p, &med, RelationType::Prescribed, prov());
        g.add_relation(&p, &dx, RelationType::HasDiagnosis, prov());
        g.add_relation(&p, &sym, RelationType::Shows, prov());
        g.add_relation(&p, &vit, RelationType::HasVitalSign, prov());
        g
    }

    #[test]
    fn medication_sentence_retrieves_medication_then_patient_neighbor() {
        let g = small_graph();
        let embedder = HashingEmbedder::new(256);
        let ctx = retrieve_context("prescribed azithromycin", 0, &g, 1, &embedder, 4000).unwrap();
        let med_id = g.find_entity(EntityType::Medication, "Azithromycin").unwrap().id.clone();
        let patient_id = g.find_entity(EntityType::Patient, "Patient").unwrap().id.clone();
        assert_eq!(ctx.entities[0].entity_id, med_id);
        assert_eq!(ctx.entities[0].hop, 0);
        assert!(ctx
            .entities
            .iter()
            .any(|c| c.entity_id == patient_id && c.hop == 1));
        // every listed relation stays inside the included entity set
        let included: std::collections::BTreeSet<&str> =
            ctx.entities.iter().map(|c| c.entity_id.as_str()).collect();
        for r in &ctx.relations {
            assert!(included.contains(r.src.as_str()));
            assert!(included.contains(r.dst.as_str()));
        }
    }

    #[test]
    fn oversized_k_saturates_to_all_entities() {
        let g = small_graph();
        let embedder = HashingEmbedder::new(256);
        let ctx = retrieve_context("anything", 0, &g, 100, &embedder, 8000).unwrap();
        let hop0 = ctx.entities.iter().filter(|c| c.hop == 0).count();
        assert_eq!(hop0, g.entities.len());
    }

    #[test]
    fn empty_graph_is_an_error() {
        let g = PatientGraph::new("P1");
        let embedder = HashingEmbedder::new(256);
        assert!(matches!(
            retrieve_context("x", 0, &g, 5, &embedder, 4000),
            Err(RetrievalError::EmptyGraph)
        ));
    }

    #[test]
    fn hop0_sets_nest_as_k_grows() {
        let g = small_graph();
        let embedder = HashingEmbedder::new(256);
        let mut previous: std::collections::BTreeSet<String> = Default::default();
        for k in 1..=5 {
            let ctx = retrieve_context("azithromycin for pneumonia", 3, &g, k, &embedder, 8000).unwrap();
            let current: std::collections::BTreeSet<String> = ctx
                .entities
                .iter()
                .filter(|c| c.hop == 0)
                .map(|c| c.entity_id.clone())
                .collect();
            assert!(previous.is_subset(&current), "hop-0 set shrank at k={k}");
            previous = current;
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let g = small_graph();
        let embedder = HashingEmbedder::new(256);
        let a = retrieve_context("azithromycin", 0, &g, 3, &embedder, 4000).unwrap();
        let b = retrieve_context("azithromycin", 0, &g, 3, &embedder, 4000).unwrap();
        assert_eq!(a.rendered_text, b.rendered_text);
    }

    #[test]
    fn budget_drops_reports_before_hop1_and_never_hop0() {
        let mut g = small_graph();
        g.communities = vec![crate::graph::Community {
            id: "L0.0".into(),
            level: 0,
            member_entity_ids: g.entities.keys().cloned().collect(),
            summary: "a very long community report ".repeat(20),
        }];
        let embedder = HashingEmbedder::new(256);
        let full = retrieve_context("azithromycin", 0, &g, 2, &embedder, 100_000).unwrap();
        assert!(!full.community_reports.is_empty());
        let tight = retrieve_context("azithromycin", 0, &g, 2, &embedder, 400).unwrap();
        assert!(tight.community_reports.is_empty());
        assert_eq!(tight.entities.iter().filter(|c| c.hop == 0).count(), 2);
    }
}
