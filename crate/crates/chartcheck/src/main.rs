//! `chartcheck` command line: one subcommand per pipeline stage plus the
//! end-to-end `pipeline` runner. Usage errors exit 2, runtime failures 1.

use chartcheck::config::{AppConfig, BackendKind};
use chartcheck::detect::{detect_document, write_detections, DetectionRunMeta};
use chartcheck::eval::{align, emit_report, evaluate, GoldLabel};
use chartcheck::generate::{assess_all, generate_all, read_samples, rewrite_document, write_samples};
use chartcheck::graph::{
    detect_communities, extract_raw_graph, full_normalize, summarize_communities, PatientGraph,
};
use chartcheck::ingest::{generate_fixture_from, load_bundle, validate_bundle};
use chartcheck::llm::LlmClient;
use chartcheck::pipeline::{has_fatal_failure, run_pipeline, PipelineConfig};
use chartcheck::retrieval::{retrieve_context, HashingEmbedder};
use chartcheck::segment::segment;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "chartcheck", version, about = "Graph-grounded faithfulness verification for clinical summaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic patient bundles.
    Fixture {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        patients: u32,
        #[arg(long)]
        out: PathBuf,
        /// First patient index.
        #[arg(long, default_value_t = 1)]
        start: u32,
    },
    /// Load and validate one patient bundle.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        patient: String,
    },
    /// Build, normalize, and cluster one patient graph.
    BuildGraph {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        patient: String,
        #[arg(long)]
        out: PathBuf,
        /// Tables only; skip LLM free-text extraction.
        #[arg(long)]
        no_llm: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scenario file for the mock backend.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Inject labeled errors into a patient's target text.
    Generate {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        patient: String,
        #[arg(long, default_value_t = 0.4)]
        ratio: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the rewritten document.
        #[arg(long)]
        rewritten: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Judge a document sentence-by-sentence against a graph.
    Detect {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        retries: u32,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Debug helper: show the evidence context for one sentence.
    Retrieve {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        sentence: String,
        #[arg(long, default_value_t = 20)]
        k: usize,
    },
    /// Score detections against generation-stage gold labels.
    Evaluate {
        /// Sample file (gold labels).
        #[arg(long)]
        gold: PathBuf,
        /// Detection file (predictions).
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full five-stage pipeline from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_app_config(
    path: Option<&PathBuf>,
    scenario: Option<&PathBuf>,
) -> Result<AppConfig, Box<dyn std::error::Error>> {
    let mut cfg = match path {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    if let Some(s) = scenario {
        cfg.backend.kind = BackendKind::Mock;
        cfg.backend.scenario_path = Some(s.to_string_lossy().to_string());
    }
    Ok(cfg)
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<i32, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Fixture {
            seed,
            patients,
            out,
            start,
        } => {
            generate_fixture_from(seed, patients, start, &out)?;
            println!("wrote {patients} patient bundles to {}", out.display());
            Ok(0)
        }
        Command::Ingest { root, patient } => {
            let record = load_bundle(&root, &patient)?;
            let warnings = validate_bundle(&record);
            println!(
                "patient {}: {} diagnoses, {} ED stays, {} radiology reports, {} target sentences",
                record.patient_id,
                record.diagnoses.len(),
                record.ed_stays.len(),
                record.radiology_reports.len(),
                segment(&record.target_text).len()
            );
            for w in &warnings {
                println!("warning: {w}");
            }
            Ok(0)
        }
        Command::BuildGraph {
            root,
            patient,
            out,
            no_llm,
            config,
            scenario,
        } => {
            let cfg = load_app_config(config.as_ref(), scenario.as_ref())?;
            let record = load_bundle(&root, &patient)?;
            let client;
            let llm = if no_llm {
                None
            } else {
                client = LlmClient::from_config(&cfg.backend)?;
                Some(&client)
            };
            let raw = extract_raw_graph(&record, llm, cfg.detection.retry_budget)?;
            println!(
                "raw graph: {} entities, {} components",
                raw.quality.total_entities, raw.quality.connected_components
            );
            let mut graph = full_normalize(raw, &cfg.graph.panel_map, &cfg.graph.synonym_map)?;
            graph.communities =
                detect_communities(&graph, cfg.graph.community_seed, cfg.graph.community_resolution);
            summarize_communities(&mut graph, llm)?;
            graph.quality = chartcheck::graph::quality_report(&graph);
            graph.save(&out)?;
            println!(
                "normalized graph: {} entities, {} lab panels, {} communities -> {}",
                graph.quality.total_entities,
                graph.quality.lab_test_entities,
                graph.communities.len(),
                out.display()
            );
            Ok(0)
        }
        Command::Generate {
            root,
            patient,
            ratio,
            seed,
            out,
            rewritten,
            config,
            scenario,
        } => {
            let mut cfg = load_app_config(config.as_ref(), scenario.as_ref())?;
            cfg.generation.rewrite_ratio = ratio;
            let record = load_bundle(&root, &patient)?;
            let client = LlmClient::from_config(&cfg.backend)?;
            let units = segment(&record.target_text);
            let judgments = assess_all(
                &units,
                &client,
                &patient,
                cfg.generation.worker_budget,
                cfg.detection.retry_budget,
            )?;
            let (samples, stats) = generate_all(
                &units,
                &judgments,
                &record,
                &client,
                &cfg.generation,
                seed,
                cfg.detection.retry_budget,
            )?;
            write_samples(&out, &samples)?;
            println!(
                "attempted {} samples, produced {}, discarded {} -> {}",
                stats.attempted,
                stats.produced,
                stats.discarded,
                out.display()
            );
            if let Some(path) = rewritten {
                let outcome = rewrite_document(&record.target_text, &units, &samples)?;
                std::fs::write(&path, outcome.text)?;
                println!("rewritten document -> {}", path.display());
            }
            Ok(0)
        }
        Command::Detect {
            graph,
            doc,
            out,
            tau,
            k,
            retries,
            config,
            scenario,
        } => {
            let mut cfg = load_app_config(config.as_ref(), scenario.as_ref())?;
            cfg.detection.tau_s = tau;
            cfg.retrieval.k = k;
            cfg.detection.retry_budget = retries;
            let graph = PatientGraph::load(&graph)?;
            let text = std::fs::read_to_string(&doc)?;
            let client = LlmClient::from_config(&cfg.backend)?;
            let outcomes = detect_document(&text, &graph, &client, &cfg);
            let positives = outcomes
                .iter()
                .filter_map(|o| o.as_detected())
                .filter(|r| r.hallucination_status)
                .count();
            let meta = DetectionRunMeta::new(&graph.patient_id, &cfg);
            write_detections(&out, &meta, &outcomes)?;
            println!(
                "{} sentences judged, {} positives -> {}",
                outcomes.len(),
                positives,
                out.display()
            );
            Ok(0)
        }
        Command::Retrieve { graph, sentence, k } => {
            let graph = PatientGraph::load(&graph)?;
            let embedder = HashingEmbedder::new(256);
            let context = retrieve_context(&sentence, 0, &graph, k, &embedder, 4000)?;
            println!("{}", context.rendered_text);
            Ok(0)
        }
        Command::Evaluate { gold, pred, out } => {
            let samples = read_samples(&gold)?;
            // duplicate keys are config errors; report them with file and line
            let mut seen = std::collections::BTreeMap::new();
            for (i, s) in samples.iter().enumerate() {
                if let Some(first) = seen.insert((s.patient_id.clone(), s.sentence_index), i + 1) {
                    return Err(format!(
                        "duplicate gold row for ({}, {}) in {}: line {} (first at line {first})",
                        s.patient_id,
                        s.sentence_index,
                        gold.display(),
                        i + 1
                    )
                    .into());
                }
            }
            let gold_rows: Vec<GoldLabel> = samples.iter().map(GoldLabel::from_sample).collect();
            let (meta, outcomes) = chartcheck::detect::read_detections(&pred)?;
            let patient = meta
                .map(|m| m.patient_id)
                .or_else(|| samples.first().map(|s| s.patient_id.clone()))
                .unwrap_or_default();
            let mut detections = Vec::new();
            let mut flagged = 0;
            let mut failed = 0;
            for outcome in &outcomes {
                match outcome.as_detected() {
                    Some(r) => {
                        if r.flagged {
                            flagged += 1;
                        }
                        detections.push((patient.clone(), r.clone()));
                    }
                    None => failed += 1,
                }
            }
            let pairs = align(&gold_rows, &detections).map_err(|e| {
                format!("{e} (gold: {}, pred: {})", gold.display(), pred.display())
            })?;
            let rows = evaluate(&pairs);
            emit_report(&rows, &[], None, flagged, failed, &out)?;
            for row in &rows {
                println!(
                    "{}: P={:.3} R={:.3} F1={:.3}{}",
                    row.stratum,
                    row.metrics.precision,
                    row.metrics.recall,
                    row.metrics.f1,
                    if row.metrics.degenerate { " (degenerate)" } else { "" }
                );
            }
            Ok(0)
        }
        Command::Pipeline { config } => {
            let cfg = PipelineConfig::load(&config)?;
            let manifest = run_pipeline(&cfg)?;
            let ok = manifest.stages.iter().filter(|s| s.status == "ok").count();
            let skipped = manifest.stages.iter().filter(|s| s.status == "skipped").count();
            let failed = manifest.stages.iter().filter(|s| s.status == "failed").count();
            println!(
                "pipeline complete: {ok} stages ran, {skipped} skipped, {failed} failed (manifest digest {})",
                &manifest.manifest_digest[..16]
            );
            Ok(if has_fatal_failure(&manifest) { 1 } else { 0 })
        }
    }
}
