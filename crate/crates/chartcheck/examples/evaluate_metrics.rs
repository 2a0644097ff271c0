//! Stratified scoring: align gold labels with detections, compute E4 and
//! E3+E4 confusion/PRF, ceiling-corrected gains, and correlations.
//!
//! ```bash
//! cargo run --example evaluate_metrics
//! ```

use chartcheck::detect::{DetectionResult, DetectionSignals};
use chartcheck::eval::{
    align, ceiling_gain, correlations, evaluate, f1_from_pr, GoldLabel,
};
use chartcheck::taxonomy::{EvidenceGrade, HallucinationType};

fn detection(index: usize, positive: bool, grade: EvidenceGrade, htype: Option<HallucinationType>) -> DetectionResult {
    DetectionResult {
        sentence_index: index,
        sentence_text: format!("sentence {index}."),
        hallucination_status: positive,
        htypes: htype.into_iter().collect(),
        grade,
        reasoning: "r".into(),
        signals: DetectionSignals {
            conflict: grade == EvidenceGrade::E4,
            support: 0.4,
            explicit: true,
        },
        confidence: None,
        retries_used: 0,
        context_digest: "d".into(),
        flagged: false,
        violations: Vec::new(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    use HallucinationType::*;
    let gold = vec![
        GoldLabel { patient_id: "P1".into(), sentence_index: 0, is_hallucination: true, htype: Some(DiagnosisError), grade: Some(EvidenceGrade::E4) },
        GoldLabel { patient_id: "P1".into(), sentence_index: 2, is_hallucination: true, htype: Some(MedicationError), grade: Some(EvidenceGrade::E4) },
        GoldLabel { patient_id: "P1".into(), sentence_index: 4, is_hallucination: true, htype: Some(InventedFact), grade: Some(EvidenceGrade::E3) },
    ];
    let detections = vec![
        ("P1".to_string(), detection(0, true, EvidenceGrade::E4, Some(DiagnosisError))), // tp
        ("P1".to_string(), detection(1, false, EvidenceGrade::E1, None)),                // tn
        ("P1".to_string(), detection(2, true, EvidenceGrade::E3, Some(MedicationError))),// fn under E4, tp under E3+E4
        ("P1".to_string(), detection(3, true, EvidenceGrade::E4, Some(ValueError))),     // fp
        ("P1".to_string(), detection(4, true, EvidenceGrade::E3, Some(InventedFact))),   // tp (E3)
    ];

    let pairs = align(&gold, &detections)?;
    println!("{} aligned sentence pairs", pairs.len());
    for row in evaluate(&pairs) {
        println!(
            "  {:<22} tp={} fp={} fn={} tn={}  P={:.3} R={:.3} F1={:.3}",
            row.stratum,
            row.counts.tp,
            row.counts.fp,
            row.counts.fn_,
            row.counts.tn,
            row.metrics.precision,
            row.metrics.recall,
            row.metrics.f1
        );
    }

    println!("\nF1 from published precision/recall pairs:");
    println!("  P=0.842 R=0.745 -> F1 {:.3}", f1_from_pr(0.842, 0.745));
    println!("  P=0.765 R=0.909 -> F1 {:.3}", f1_from_pr(0.765, 0.909));

    println!("\nceiling-corrected tuning gains:");
    for (label, base, tuned) in [
        ("exam results", 0.081, 0.482),
        ("temporal", 0.632, 0.625),
    ] {
        println!("  {label}: base {base} -> tuned {tuned} = {:+.1}%", ceiling_gain(base, tuned)?);
    }

    let lengths: Vec<f64> = (0..20).map(|i| 800.0 + 35.0 * i as f64).collect();
    let f1s: Vec<f64> = (0..20).map(|i| 0.8 + 0.01 * ((i * 7) % 5) as f64).collect();
    let report = correlations(&lengths, &f1s)?;
    println!(
        "\nrecord length vs F1 over {} patients: Pearson r={:.3} (p={:.3}), Spearman rho={:.3} (p={:.3})",
        report.n, report.pearson_r, report.pearson_p, report.spearman_rho, report.spearman_p
    );
    Ok(())
}
