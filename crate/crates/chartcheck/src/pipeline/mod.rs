//! The five-stage run: data preparation, graph construction, error
//! injection, detection, evaluation — driven by one declarative config.
//!
//! Stage outputs are content-addressed: each stage records a digest of its
//! inputs in the manifest, and a re-run with unchanged inputs skips the
//! stage wholesale. Failures are stage-scoped and recorded rather than
//! aborting the run. Timing and timestamps live only in the manifest, so
//! artifacts from two identical mock runs compare byte-for-byte.

use crate::config::AppConfig;
use crate::detect::{detect_document, read_detections, write_detections, DetectionRunMeta};
use crate::eval::{align, correlations, evaluate, emit_report, GoldLabel, Stratum};
use crate::generate::{
    assess_all, generate_all, read_samples, rewrite_document, write_samples,
};
use crate::graph::{
    detect_communities, extract_raw_graph, full_normalize, summarize_communities, PatientGraph,
};
use crate::ingest::{fixture::patient_id, generate_fixture_from, load_bundle};
use crate::llm::{export_distillation, LlmClient, LogSink};
use crate::segment::segment;
use crate::util::sha256_hex;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("backend: {0}")]
    Llm(#[from] crate::llm::LlmError),
}

fn default_validation_fraction() -> f64 {
    0.05
}

fn default_sample_seed() -> u64 {
    7
}

fn default_train_range() -> [u32; 2] {
    [1, 200]
}

fn default_test_range() -> [u32; 2] {
    [201, 250]
}

/// The `[pipeline]` section of the run config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSection {
    /// Bundle directory; created by the fixture stage when `fixture_seed`
    /// is set.
    pub data_root: String,
    pub out_dir: String,
    /// Inclusive patient index range processed by the run.
    pub patients: [u32; 2],
    /// Training/validation pool (patient-level partition).
    #[serde(default = "default_train_range")]
    pub train_range: [u32; 2],
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Held-out test partition; must not overlap the training pool.
    #[serde(default = "default_test_range")]
    pub test_range: [u32; 2],
    /// Generate synthetic bundles into `data_root` before running.
    #[serde(default)]
    pub fixture_seed: Option<u64>,
    #[serde(default = "default_sample_seed")]
    pub sample_seed: u64,
    /// Use the LLM for free-text graph extraction (tables-only otherwise).
    #[serde(default)]
    pub graph_use_llm: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub pipeline: PipelineSection,
    #[serde(flatten)]
    pub app: AppConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let p = &self.pipeline;
        for (name, [lo, hi]) in [
            ("patients", p.patients),
            ("train_range", p.train_range),
            ("test_range", p.test_range),
        ] {
            if lo > hi || lo == 0 {
                return Err(PipelineError::Config(format!(
                    "{name} range [{lo}, {hi}] is invalid"
                )));
            }
        }
        let (t0, t1) = (p.train_range[0], p.train_range[1]);
        let (s0, s1) = (p.test_range[0], p.test_range[1]);
        if t0 <= s1 && s0 <= t1 {
            return Err(PipelineError::Config(format!(
                "train range [{t0}, {t1}] overlaps test range [{s0}, {s1}]"
            )));
        }
        if !(0.0..1.0).contains(&p.validation_fraction) {
            return Err(PipelineError::Config(
                "validation_fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StageRecord {
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patient: Option<String>,
    pub inputs_digest: String,
    pub outputs: Vec<(String, String)>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub created_at: String,
    pub config_digest: String,
    pub prompt_assets: Vec<(String, String)>,
    pub graph_config_version: String,
    pub stages: Vec<StageRecord>,
    /// Digest over the stable parts (everything except `created_at` and
    /// durations), so identical re-runs match.
    pub manifest_digest: String,
}

impl Manifest {
    fn finalize(&mut self) {
        let stable: Vec<serde_json::Value> = self
            .stages
            .iter()
            .map(|s| {
                // skipped stages reuse prior outputs; digest them as ok
                let status = if s.status == "skipped" { "ok" } else { &s.status };
                serde_json::json!({
                    "stage": s.stage,
                    "patient": s.patient,
                    "inputs": s.inputs_digest,
                    "outputs": s.outputs,
                    "status": status,
                })
            })
            .collect();
        let blob = serde_json::to_string(&(
            &self.config_digest,
            &self.prompt_assets,
            &self.graph_config_version,
            stable,
        ))
        .expect("manifest digests");
        self.manifest_digest = sha256_hex(blob.as_bytes());
    }

    pub fn load(path: &Path) -> Option<Manifest> {
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }
}

fn file_digest(path: &Path) -> String {
    match std::fs::read(path) {
        Ok(bytes) => sha256_hex(&bytes),
        Err(_) => "absent".to_string(),
    }
}

struct StageRunner<'a> {
    previous: Option<&'a Manifest>,
    records: Vec<StageRecord>,
}

impl<'a> StageRunner<'a> {
    fn new(previous: Option<&'a Manifest>) -> Self {
        StageRunner {
            previous,
            records: Vec::new(),
        }
    }

    /// Skip the stage when a previous record matches the inputs digest and
    /// all its outputs still exist unchanged; otherwise run it.
    fn run<F>(
        &mut self,
        stage: &str,
        patient: Option<&str>,
        inputs_digest: String,
        outputs: Vec<PathBuf>,
        out_dir: &Path,
        body: F,
    ) -> bool
    where
        F: FnOnce() -> Result<(), String>,
    {
        let rel = |p: &Path| {
            p.strip_prefix(out_dir)
                .unwrap_or(p)
                .to_string_lossy()
                .to_string()
        };
        if let Some(previous) = self.previous {
            if let Some(prior) = previous.stages.iter().find(|s| {
                s.stage == stage
                    && s.patient.as_deref() == patient
                    && s.inputs_digest == inputs_digest
                    && s.status != "failed"
            }) {
                let intact = prior
                    .outputs
                    .iter()
                    .all(|(name, digest)| file_digest(&out_dir.join(name)) == *digest);
                if intact {
                    self.records.push(StageRecord {
                        stage: stage.to_string(),
                        patient: patient.map(str::to_string),
                        inputs_digest,
                        outputs: prior.outputs.clone(),
                        status: "skipped".to_string(),
                        error: None,
                        duration_ms: 0,
                    });
                    return true;
                }
            }
        }

        let started = std::time::Instant::now();
        let result = body();
        let duration_ms = started.elapsed().as_millis() as u64;
        match result {
            Ok(()) => {
                let outputs = outputs
                    .iter()
                    .map(|p| (rel(p), file_digest(p)))
                    .collect();
                self.records.push(StageRecord {
                    stage: stage.to_string(),
                    patient: patient.map(str::to_string),
                    inputs_digest,
                    outputs,
                    status: "ok".to_string(),
                    error: None,
                    duration_ms,
                });
                true
            }
            Err(message) => {
                self.records.push(StageRecord {
                    stage: stage.to_string(),
                    patient: patient.map(str::to_string),
                    inputs_digest,
                    outputs: Vec::new(),
                    status: "failed".to_string(),
                    error: Some(message),
                    duration_ms,
                });
                false
            }
        }
    }
}

fn bundle_digest(root: &Path) -> String {
    let tables = [
        "diagnosis.csv",
        "discharge.csv",
        "discharge_target.csv",
        "edstays.csv",
        "radiology.csv",
        "triage.csv",
    ];
    let digests: Vec<String> = tables.iter().map(|t| file_digest(&root.join(t))).collect();
    sha256_hex(digests.join("|").as_bytes())
}

/// Execute the full pipeline described by `config`. Stage failures are
/// recorded in the manifest; the function errors only on configuration or
/// top-level IO problems.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    config.validate()?;
    let p = &config.pipeline;
    let out_dir = PathBuf::from(&p.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    for sub in ["graphs", "samples", "rewritten", "detections", "report", "logs"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }

    let config_blob = toml::to_string(config).map_err(|e| PipelineError::Config(e.to_string()))?;
    let config_digest = sha256_hex(config_blob.as_bytes());
    let previous = Manifest::load(&out_dir.join("manifest.json"));
    let mut runner = StageRunner::new(previous.as_ref());

    let scenario_digest = config
        .app
        .backend
        .scenario_path
        .as_ref()
        .map(|s| file_digest(Path::new(s)))
        .unwrap_or_else(|| "none".to_string());

    let client = LlmClient::from_config(&config.app.backend)?.with_sink(LogSink::memory());
    let data_root = PathBuf::from(&p.data_root);

    // stage 1: data preparation
    if let Some(seed) = p.fixture_seed {
        let n = p.patients[1] - p.patients[0] + 1;
        let inputs = sha256_hex(format!("fixture|{seed}|{}|{}", p.patients[0], n).as_bytes());
        let outputs: Vec<PathBuf> = [
            "diagnosis.csv",
            "discharge.csv",
            "discharge_target.csv",
            "edstays.csv",
            "radiology.csv",
            "triage.csv",
        ]
        .iter()
        .map(|t| data_root.join(t))
        .collect();
        runner.run("fixture", None, inputs, outputs, &out_dir, || {
            generate_fixture_from(seed, n, p.patients[0], &data_root).map_err(|e| e.to_string())
        });
    }

    let graph_cfg_blob = serde_json::to_string(&config.app.graph).expect("config serializes");
    let gen_cfg_blob = serde_json::to_string(&config.app.generation).expect("config serializes");
    let det_cfg_blob = serde_json::to_string(&config.app.detection).expect("config serializes");

    let patients: Vec<String> = (p.patients[0]..=p.patients[1]).map(patient_id).collect();
    let bundle = bundle_digest(&data_root);

    for pid in &patients {
        let graph_path = out_dir.join("graphs").join(format!("{pid}.json"));
        let samples_path = out_dir.join("samples").join(format!("{pid}.jsonl"));
        let rewritten_path = out_dir.join("rewritten").join(format!("{pid}.txt"));
        let detections_path = out_dir.join("detections").join(format!("{pid}.jsonl"));

        // stage 2: graph construction
        let graph_inputs = sha256_hex(
            format!(
                "graph|{pid}|{bundle}|{graph_cfg_blob}|{}|{scenario_digest}",
                p.graph_use_llm
            )
            .as_bytes(),
        );
        let graph_ok = runner.run(
            "build-graph",
            Some(pid),
            graph_inputs,
            vec![graph_path.clone()],
            &out_dir,
            || {
                let record = load_bundle(&data_root, pid).map_err(|e| e.to_string())?;
                let llm = p.graph_use_llm.then_some(&client);
                let raw = extract_raw_graph(&record, llm, config.app.detection.retry_budget)
                    .map_err(|e| e.to_string())?;
                let mut graph = full_normalize(
                    raw,
                    &config.app.graph.panel_map,
                    &config.app.graph.synonym_map,
                )
                .map_err(|e| e.to_string())?;
                graph.communities = detect_communities(
                    &graph,
                    config.app.graph.community_seed,
                    config.app.graph.community_resolution,
                );
                summarize_communities(&mut graph, llm).map_err(|e| e.to_string())?;
                graph.quality = crate::graph::quality_report(&graph);
                // timing belongs to the manifest, not the artifact
                graph.quality.build_seconds = 0.0;
                graph.save(&graph_path).map_err(|e| e.to_string())
            },
        );
        if !graph_ok {
            continue;
        }

        // stage 3: error injection
        let graph_digest = file_digest(&graph_path);
        let gen_inputs = sha256_hex(
            format!(
                "generate|{pid}|{bundle}|{graph_digest}|{gen_cfg_blob}|{}|{scenario_digest}",
                p.sample_seed
            )
            .as_bytes(),
        );
        let gen_ok = runner.run(
            "generate",
            Some(pid),
            gen_inputs,
            vec![samples_path.clone(), rewritten_path.clone()],
            &out_dir,
            || {
                let record = load_bundle(&data_root, pid).map_err(|e| e.to_string())?;
                let units = segment(&record.target_text);
                let judgments = assess_all(
                    &units,
                    &client,
                    pid,
                    config.app.generation.worker_budget,
                    config.app.detection.retry_budget,
                )
                .map_err(|e| e.to_string())?;
                let (samples, _stats) = generate_all(
                    &units,
                    &judgments,
                    &record,
                    &client,
                    &config.app.generation,
                    p.sample_seed,
                    config.app.detection.retry_budget,
                )
                .map_err(|e| e.to_string())?;
                write_samples(&samples_path, &samples).map_err(|e| e.to_string())?;
                let outcome = rewrite_document(&record.target_text, &units, &samples)
                    .map_err(|e| e.to_string())?;
                std::fs::write(&rewritten_path, outcome.text).map_err(|e| e.to_string())
            },
        );
        if !gen_ok {
            continue;
        }

        // stage 4: detection
        let det_inputs = sha256_hex(
            format!(
                "detect|{pid}|{graph_digest}|{}|{det_cfg_blob}|{scenario_digest}",
                file_digest(&rewritten_path)
            )
            .as_bytes(),
        );
        runner.run(
            "detect",
            Some(pid),
            det_inputs,
            vec![detections_path.clone()],
            &out_dir,
            || {
                let graph = PatientGraph::load(&graph_path).map_err(|e| e.to_string())?;
                let text = std::fs::read_to_string(&rewritten_path).map_err(|e| e.to_string())?;
                let outcomes = detect_document(&text, &graph, &client, &config.app);
                let meta = DetectionRunMeta::new(pid, &config.app);
                write_detections(&detections_path, &meta, &outcomes).map_err(|e| e.to_string())
            },
        );
    }

    // stage 5: evaluation over everything produced
    let mut eval_inputs_parts: Vec<String> = Vec::new();
    for pid in &patients {
        eval_inputs_parts.push(file_digest(&out_dir.join("samples").join(format!("{pid}.jsonl"))));
        eval_inputs_parts.push(file_digest(
            &out_dir.join("detections").join(format!("{pid}.jsonl")),
        ));
    }
    let eval_inputs = sha256_hex(format!("evaluate|{}", eval_inputs_parts.join("|")).as_bytes());
    let report_dir = out_dir.join("report");
    let report_outputs = vec![
        report_dir.join("metrics.csv"),
        report_dir.join("gains.csv"),
        report_dir.join("correlations.csv"),
        report_dir.join("summary.json"),
    ];
    runner.run("evaluate", None, eval_inputs, report_outputs, &out_dir, || {
        evaluate_stage(&out_dir, &data_root, &patients, &report_dir).map_err(|e| e.to_string())
    });

    // training export: train-partition patients only (partition hygiene)
    let train_patients: Vec<String> = patients
        .iter()
        .filter(|pid| {
            let n: u32 = pid.trim_start_matches('P').parse().unwrap_or(0);
            n >= p.train_range[0] && n <= p.train_range[1]
        })
        .cloned()
        .collect();
    let distill_path = out_dir.join("distill.jsonl");
    let distill_inputs = sha256_hex(
        format!(
            "distill|{}",
            train_patients
                .iter()
                .map(|pid| file_digest(&out_dir.join("detections").join(format!("{pid}.jsonl"))))
                .collect::<Vec<_>>()
                .join("|")
        )
        .as_bytes(),
    );
    runner.run(
        "distill",
        None,
        distill_inputs,
        vec![distill_path.clone()],
        &out_dir,
        || {
            let logs = client.logs();
            let mut samples = Vec::new();
            let mut detections = Vec::new();
            for pid in &train_patients {
                let sp = out_dir.join("samples").join(format!("{pid}.jsonl"));
                if sp.exists() {
                    samples.extend(read_samples(&sp).map_err(|e| e.to_string())?);
                }
                let dp = out_dir.join("detections").join(format!("{pid}.jsonl"));
                if dp.exists() {
                    let (_, outcomes) = read_detections(&dp).map_err(|e| e.to_string())?;
                    let results: Vec<_> = outcomes
                        .iter()
                        .filter_map(|o| o.as_detected().cloned())
                        .collect();
                    detections.push((pid.clone(), results));
                }
            }
            export_distillation(&logs, &samples, &detections, &distill_path)
                .map(|_| ())
                .map_err(|e| e.to_string())
        },
    );

    // dump the call log (telemetry; excluded from reproducibility checks)
    let log_path = out_dir.join("logs").join("calls.jsonl");
    let mut log_lines = String::new();
    for entry in client.logs() {
        log_lines.push_str(&serde_json::to_string(&entry).expect("log serializes"));
        log_lines.push('\n');
    }
    std::fs::write(&log_path, log_lines)?;

    let mut manifest = Manifest {
        created_at: chrono::Utc::now().to_rfc3339(),
        config_digest,
        prompt_assets: crate::llm::prompts::asset_versions(),
        graph_config_version: config.app.graph.version.clone(),
        stages: runner.records,
        manifest_digest: String::new(),
    };
    manifest.finalize();
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}

fn evaluate_stage(
    out_dir: &Path,
    data_root: &Path,
    patients: &[String],
    report_dir: &Path,
) -> Result<(), Box<dyn std::error::Error>> {
    let mut gold: Vec<GoldLabel> = Vec::new();
    let mut detections: Vec<(String, crate::detect::DetectionResult)> = Vec::new();
    let mut flagged = 0usize;
    let mut failed = 0usize;
    let mut lengths: Vec<f64> = Vec::new();
    let mut patient_f1: Vec<f64> = Vec::new();

    for pid in patients {
        let sp = out_dir.join("samples").join(format!("{pid}.jsonl"));
        let dp = out_dir.join("detections").join(format!("{pid}.jsonl"));
        if !dp.exists() {
            continue;
        }
        let mut patient_gold: Vec<GoldLabel> = Vec::new();
        if sp.exists() {
            for sample in read_samples(&sp)? {
                patient_gold.push(GoldLabel::from_sample(&sample));
            }
        }
        let (_, outcomes) = read_detections(&dp)?;
        let mut patient_detections: Vec<(String, crate::detect::DetectionResult)> = Vec::new();
        for outcome in &outcomes {
            match outcome {
                crate::detect::SentenceOutcome::Detected { result } => {
                    if result.flagged {
                        flagged += 1;
                    }
                    patient_detections.push((pid.clone(), result.clone()));
                }
                crate::detect::SentenceOutcome::Failed { .. } => failed += 1,
            }
        }

        // patient-level F1 for the length-robustness correlation
        if let Ok(record) = load_bundle(data_root, pid) {
            let pairs = align(&patient_gold, &patient_detections)?;
            let counts = crate::eval::confusion(&pairs, Stratum::E3E4);
            let metrics = crate::eval::prf(&counts, Stratum::E3E4);
            lengths.push(record.discharge_text.len() as f64);
            patient_f1.push(metrics.f1);
        }

        gold.extend(patient_gold);
        detections.extend(patient_detections);
    }

    let pairs = align(&gold, &detections)?;
    let rows = evaluate(&pairs);
    let correlation = if lengths.len() >= 3 {
        correlations(&lengths, &patient_f1).ok()
    } else {
        None
    };
    emit_report(&rows, &[], correlation.as_ref(), flagged, failed, report_dir)?;
    Ok(())
}

/// True when the manifest shows a stage that failed outright with no
/// usable output (the pipeline's nonzero-exit condition).
pub fn has_fatal_failure(manifest: &Manifest) -> bool {
    manifest
        .stages
        .iter()
        .any(|s| s.status == "failed" && s.outputs.is_empty())
}
