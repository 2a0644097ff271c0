//! Versioned runtime configuration.
//!
//! Everything tunable lives here with compiled-in defaults: the lab-panel
//! and synonym maps for graph normalization, embedding dimension and context
//! budget for retrieval, plausibility bounds for generated values, the
//! support threshold and retry budget for detection, and the LLM backend.
//! A TOML file can override any section; secrets (the API token) are read
//! from the environment variable named in the backend section, never from
//! the file itself.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Top-level configuration, one section per subsystem.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AppConfig {
    pub graph: GraphConfig,
    pub retrieval: RetrievalConfig,
    pub generation: GenerationConfig,
    pub detection: DetectionConfig,
    pub backend: BackendConfig,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse(path.display().to_string(), e))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("cannot parse config {0}: {1}")]
    Parse(String, #[source] toml::de::Error),
}

/// Normalization maps and extraction behavior for graph construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    /// Bumped whenever the shipped maps change shape.
    pub version: String,
    /// Lab parameter (lowercase) -> panel name. Parameters found here merge
    /// into a single LAB_TEST entity named after the panel.
    pub panel_map: BTreeMap<String, String>,
    /// Surface form (lowercase) -> canonical entity name.
    pub synonym_map: BTreeMap<String, String>,
    /// Leiden resolution parameter.
    pub community_resolution: f64,
    /// Seed for community detection.
    pub community_seed: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        let mut panel_map = BTreeMap::new();
        for (param, panel) in [
            ("wbc", "CBC"),
            ("rbc", "CBC"),
            ("hgb", "CBC"),
            ("hct", "CBC"),
            ("alt", "liver function"),
            ("ast", "liver function"),
            ("bilirubin", "liver function"),
            ("creatinine", "renal function"),
            ("bun", "renal function"),
        ] {
            panel_map.insert(param.to_string(), panel.to_string());
        }
        let mut synonym_map = BTreeMap::new();
        for (surface, canonical) in [
            ("t2dm", "type 2 diabetes mellitus"),
            ("type ii diabetes", "type 2 diabetes mellitus"),
            ("htn", "hypertension"),
            ("afib", "atrial fibrillation"),
            ("a-fib", "atrial fibrillation"),
            ("cap", "pneumonia"),
            ("community-acquired pneumonia", "pneumonia"),
            ("mi", "myocardial infarction"),
            ("asa", "aspirin"),
            ("ckd", "chronic kidney disease"),
        ] {
            synonym_map.insert(surface.to_string(), canonical.to_string());
        }
        GraphConfig {
            version: "graph-config/1".to_string(),
            panel_map,
            synonym_map,
            community_resolution: 1.0,
            community_seed: 7,
        }
    }
}

/// Which embedding backend retrieval uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Deterministic character n-gram feature hashing; no network.
    #[default]
    Local,
    /// OpenAI-compatible `/embeddings` endpoint.
    Remote,
}

/// Embedding and context assembly parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Embedding dimension D.
    pub embedding_dim: usize,
    /// Top-k entity candidates retrieved per sentence.
    pub k: usize,
    /// Hard character budget for the rendered evidence context.
    pub context_budget: usize,
    pub embedding: EmbeddingKind,
    /// Remote embedding endpoint settings (remote mode only).
    pub embedding_base_url: String,
    pub embedding_model: String,
    pub embedding_token_env: String,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            embedding_dim: 256,
            k: 20,
            context_budget: 4000,
            embedding: EmbeddingKind::Local,
            embedding_base_url: "http://localhost:8000/v1".to_string(),
            embedding_model: "local-embedder".to_string(),
            embedding_token_env: "CHARTCHECK_API_TOKEN".to_string(),
        }
    }
}

/// One allowed numeric interval for a named clinical parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlausibilityBound {
    pub min: f64,
    pub max: f64,
}

/// Error-injection controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Fraction of applicable sentences to rewrite.
    pub rewrite_ratio: f64,
    /// Extra generation attempts allowed when a sample fails verification.
    pub regeneration_cap: u32,
    /// Bounded worker budget for concurrent per-sentence calls.
    pub worker_budget: usize,
    /// Sampling temperature for rewrite generation.
    pub temperature: f64,
    /// Plausibility bounds by parameter key; rewrites carrying values
    /// outside these intervals are rejected.
    pub plausibility_bounds: BTreeMap<String, PlausibilityBound>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let mut bounds = BTreeMap::new();
        for (key, min, max) in [
            ("systolic_bp", 50.0, 260.0),
            ("diastolic_bp", 20.0, 160.0),
            ("heart_rate", 20.0, 250.0),
            ("respiratory_rate", 4.0, 60.0),
            ("temperature_f", 90.0, 108.0),
            ("spo2", 50.0, 100.0),
            ("glucose", 20.0, 1500.0),
        ] {
            bounds.insert(key.to_string(), PlausibilityBound { min, max });
        }
        GenerationConfig {
            rewrite_ratio: 0.4,
            regeneration_cap: 2,
            worker_budget: 8,
            temperature: 0.7,
            plausibility_bounds: bounds,
        }
    }
}

/// Judgment thresholds and retry budget for detection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Support threshold separating E3 from E2/E1.
    pub tau_s: f64,
    /// Total structured-output attempts per sentence (initial + retries).
    pub retry_budget: u32,
    /// Bounded worker budget for concurrent per-sentence detection.
    pub worker_budget: usize,
    /// Reject unknown fields in structured outputs when true.
    pub strict_schema: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            tau_s: 0.5,
            retry_budget: 3,
            worker_budget: 8,
            strict_schema: true,
        }
    }
}

/// Which chat-completion backend to talk to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Deterministic scripted playback; no network.
    #[default]
    Mock,
    /// OpenAI-compatible chat completions endpoint.
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    /// Scenario file for mock mode.
    pub scenario_path: Option<String>,
    /// Base backoff delay in milliseconds for network retries.
    pub backoff_base_ms: u64,
    /// Maximum outstanding remote requests.
    pub max_concurrent_requests: usize,
    /// Record rendered prompts in the call log (needed for distillation export).
    pub log_prompts: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            base_url: "http://localhost:8000/v1".to_string(),
            model: "local-detector".to_string(),
            token_env: "CHARTCHECK_API_TOKEN".to_string(),
            scenario_path: None,
            backoff_base_ms: 1000,
            max_concurrent_requests: 8,
            log_prompts: true,
        }
    }
}
