//! Graph-grounded faithfulness verification for clinical discharge summaries.
//!
//! `chartcheck` builds a per-patient knowledge graph from multi-table health
//! records, injects labeled factual errors into summary text at a controlled
//! ratio, detects errors sentence-by-sentence against graph evidence with a
//! four-level evidence grade (E1 strong support .. E4 direct contradiction),
//! and scores detection quality with stratified precision/recall/F1.
//!
//! The whole pipeline runs offline against a deterministic scripted LLM
//! backend, so every stage is reproducible and testable without network
//! access; a remote OpenAI-compatible backend plugs in behind the same
//! interface for live runs.
//!
//! Start with the runnable examples (`cargo run --example full_pipeline`) or
//! the `chartcheck` binary, which exposes one subcommand per stage:
//! `fixture`, `ingest`, `build-graph`, `generate`, `detect`, `evaluate`,
//! `retrieve`, and `pipeline`.

pub mod config;
pub mod detect;
pub mod eval;
pub mod generate;
pub mod graph;
pub mod ingest;
pub mod llm;
pub mod pipeline;
pub mod retrieval;
pub mod segment;
pub mod structured;
pub mod taxonomy;
pub mod util;

pub use config::AppConfig;
pub use detect::{DetectionResult, EvidenceGrade, GradingConfig};
pub use generate::HallucinationSample;
pub use graph::PatientGraph;
pub use ingest::PatientRecord;
pub use llm::LlmClient;
pub use taxonomy::HallucinationType;
