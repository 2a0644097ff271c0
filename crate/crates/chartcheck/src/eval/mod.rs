//! Alignment of detections with generation-stage gold labels and every
//! reported metric: stratified precision/recall/F1, ceiling-corrected
//! fine-tuning gain, and length-robustness correlations.
//!
//! Gold labels come from the error-injection records. Sentences that were
//! never rewritten and have no gold row count as implicit negatives: a
//! detection there is judged against a synthesized negative label.

use crate::detect::DetectionResult;
use crate::generate::HallucinationSample;
use crate::taxonomy::{EvidenceGrade, HallucinationType};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("duplicate key ({patient_id}, {sentence_index}) in {origin}")]
    DuplicateKey {
        patient_id: String,
        sentence_index: usize,
        origin: String,
    },
    #[error("length mismatch: x has {x}, y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("too few points: {n} < 3")]
    TooFewPoints { n: usize },
    #[error("ceiling gain undefined for base F1 = 1")]
    DegenerateBase,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One gold row. Positives carry the injected type and grade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub patient_id: String,
    pub sentence_index: usize,
    pub is_hallucination: bool,
    pub htype: Option<HallucinationType>,
    pub grade: Option<EvidenceGrade>,
}

impl GoldLabel {
    pub fn implicit_negative(patient_id: &str, sentence_index: usize) -> Self {
        GoldLabel {
            patient_id: patient_id.to_string(),
            sentence_index,
            is_hallucination: false,
            htype: None,
            grade: None,
        }
    }

    pub fn from_sample(sample: &HallucinationSample) -> Self {
        GoldLabel {
            patient_id: sample.patient_id.clone(),
            sentence_index: sample.sentence_index,
            is_hallucination: true,
            htype: Some(sample.htype),
            grade: Some(sample.generation_grade),
        }
    }
}

/// One aligned (gold, detection) pair keyed by (patient, sentence).
#[derive(Debug, Clone)]
pub struct PairedRow {
    pub patient_id: String,
    pub sentence_index: usize,
    pub gold: GoldLabel,
    pub detection: Option<DetectionResult>,
}

/// Inner join on (patient_id, sentence_index) with implicit negatives for
/// detections on un-rewritten sentences; unmatched gold rows pair with no
/// detection and count as misses downstream.
pub fn align(
    gold: &[GoldLabel],
    detections: &[(String, DetectionResult)],
) -> Result<Vec<PairedRow>, EvalError> {
    let mut gold_map: BTreeMap<(String, usize), &GoldLabel> = BTreeMap::new();
    for g in gold {
        if gold_map
            .insert((g.patient_id.clone(), g.sentence_index), g)
            .is_some()
        {
            return Err(EvalError::DuplicateKey {
                patient_id: g.patient_id.clone(),
                sentence_index: g.sentence_index,
                origin: "gold".into(),
            });
        }
    }
    let mut det_map: BTreeMap<(String, usize), &DetectionResult> = BTreeMap::new();
    for (patient_id, d) in detections {
        if det_map
            .insert((patient_id.clone(), d.sentence_index), d)
            .is_some()
        {
            return Err(EvalError::DuplicateKey {
                patient_id: patient_id.clone(),
                sentence_index: d.sentence_index,
                origin: "detections".into(),
            });
        }
    }

    let keys: std::collections::BTreeSet<(String, usize)> =
        gold_map.keys().cloned().chain(det_map.keys().cloned()).collect();
    Ok(keys
        .into_iter()
        .map(|(patient_id, sentence_index)| {
            let gold = gold_map
                .get(&(patient_id.clone(), sentence_index))
                .map(|g| (*g).clone())
                .unwrap_or_else(|| GoldLabel::implicit_negative(&patient_id, sentence_index));
            let detection = det_map
                .get(&(patient_id.clone(), sentence_index))
                .map(|d| (*d).clone());
            PairedRow {
                patient_id,
                sentence_index,
                gold,
                detection,
            }
        })
        .collect())
}

/// Evaluation stratum: the safety-critical E4 slice, the broad E3+E4
/// slice, or one specific error type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stratum {
    E4,
    E3E4,
    Type(HallucinationType),
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stratum::E4 => write!(f, "E4"),
            Stratum::E3E4 => write!(f, "E3+E4"),
            Stratum::Type(t) => write!(f, "type:{t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn gold_positive(gold: &GoldLabel, stratum: Stratum) -> bool {
    if !gold.is_hallucination {
        return false;
    }
    match stratum {
        Stratum::E4 => gold.grade == Some(EvidenceGrade::E4),
        Stratum::E3E4 => true,
        Stratum::Type(t) => gold.htype == Some(t),
    }
}

fn predicted_positive(detection: Option<&DetectionResult>, stratum: Stratum) -> bool {
    match detection {
        None => false,
        Some(d) => {
            if !d.hallucination_status {
                return false;
            }
            match stratum {
                Stratum::E4 => d.grade == EvidenceGrade::E4,
                Stratum::E3E4 => true,
                Stratum::Type(t) => d.htypes.contains(&t),
            }
        }
    }
}

/// Tally a confusion matrix for one stratum over aligned pairs.
pub fn confusion(pairs: &[PairedRow], stratum: Stratum) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for row in pairs {
        let g = gold_positive(&row.gold, stratum);
        let p = predicted_positive(row.detection.as_ref(), stratum);
        match (g, p) {
            (true, true) => counts.tp += 1,
            (false, true) => counts.fp += 1,
            (true, false) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedMetrics {
    pub stratum: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// A denominator was zero; the affected metrics report 0.
    pub degenerate: bool,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_from_pr(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision, recall, and F1 from a confusion matrix. Zero denominators
/// produce 0 with the degenerate flag set.
pub fn prf(counts: &ConfusionCounts, stratum: Stratum) -> StratifiedMetrics {
    let p_den = counts.tp + counts.fp;
    let r_den = counts.tp + counts.fn_;
    let degenerate = p_den == 0 || r_den == 0;
    let precision = if p_den == 0 {
        0.0
    } else {
        counts.tp as f64 / p_den as f64
    };
    let recall = if r_den == 0 {
        0.0
    } else {
        counts.tp as f64 / r_den as f64
    };
    StratifiedMetrics {
        stratum: stratum.to_string(),
        precision,
        recall,
        f1: f1_from_pr(precision, recall),
        degenerate,
    }
}

/// Ceiling-corrected gain in percent: the share of remaining improvable
/// headroom that tuning consumed, (tuned - base) / (1 - base) * 100.
pub fn ceiling_gain(base_f1: f64, tuned_f1: f64) -> Result<f64, EvalError> {
    if base_f1 >= 1.0 {
        return Err(EvalError::DegenerateBase);
    }
    Ok((tuned_f1 - base_f1) / (1.0 - base_f1) * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson_r: f64,
    pub pearson_p: f64,
    pub spearman_rho: f64,
    pub spearman_p: f64,
    pub n: usize,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Pearson product-moment correlation; 0 when either side has no variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx.sqrt() * vy.sqrt())
    }
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // mean of 1-based ranks i+1..=j+1
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided p for a correlation coefficient via the t approximation with
/// n - 2 degrees of freedom.
fn correlation_p(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = r.abs() * (df / denom).sqrt();
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
    2.0 * (1.0 - dist.cdf(t))
}

/// Pearson on raw values; Spearman as Pearson over average ranks (which
/// handles ties exactly); two-sided p values via the t approximation.
pub fn correlations(x: &[f64], y: &[f64]) -> Result<CorrelationReport, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 3 {
        return Err(EvalError::TooFewPoints { n: x.len() });
    }
    let r = pearson(x, y);
    let rho = pearson(&average_ranks(x), &average_ranks(y));
    Ok(CorrelationReport {
        pearson_r: r,
        pearson_p: correlation_p(r, x.len()),
        spearman_rho: rho,
        spearman_p: correlation_p(rho, x.len()),
        n: x.len(),
    })
}

/// Exact permutation p for Pearson r on small samples (n <= 8): the share
/// of y-permutations with |r| at least as large as observed.
pub fn pearson_permutation_p(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch { x: x.len(), y: y.len() });
    }
    let n = x.len();
    if n < 3 {
        return Err(EvalError::TooFewPoints { n });
    }
    assert!(n <= 8, "exact permutation p is for small n");
    let observed = pearson(x, y).abs();
    let mut perm: Vec<f64> = y.to_vec();
    let mut hits = 0usize;
    let mut total = 0usize;
    // Heap's algorithm, iterative
    let mut c = vec![0usize; n];
    total += 1;
    if pearson(x, &perm).abs() >= observed - 1e-12 {
        hits += 1;
    }
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            total += 1;
            if pearson(x, &perm).abs() >= observed - 1e-12 {
                hits += 1;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// One report row: a stratum with its counts and metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub stratum: String,
    pub counts: ConfusionCounts,
    pub metrics: StratifiedMetrics,
}

/// Ceiling-gain row for the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainRow {
    pub label: String,
    pub base_f1: f64,
    pub tuned_f1: f64,
    pub gain_percent: f64,
}

/// Full evaluation over aligned pairs: E4, E3+E4, and one row per error
/// type that appears in gold or predictions.
pub fn evaluate(pairs: &[PairedRow]) -> Vec<ReportRow> {
    let mut strata = vec![Stratum::E4, Stratum::E3E4];
    for t in HallucinationType::ALL {
        let mentioned = pairs.iter().any(|row| {
            row.gold.htype == Some(t)
                || row
                    .detection
                    .as_ref()
                    .is_some_and(|d| d.htypes.contains(&t))
        });
        if mentioned {
            strata.push(Stratum::Type(t));
        }
    }
    strata
        .into_iter()
        .map(|s| {
            let counts = confusion(pairs, s);
            ReportRow {
                stratum: s.to_string(),
                counts,
                metrics: prf(&counts, s),
            }
        })
        .collect()
}

/// Deterministic CSV + JSON summary report. Two identical runs produce
/// byte-identical files; timestamps belong in the run manifest, not here.
pub fn emit_report(
    rows: &[ReportRow],
    gains: &[GainRow],
    correlation: Option<&CorrelationReport>,
    flagged_count: usize,
    failed_count: usize,
    out_dir: &Path,
) -> Result<(), EvalError> {
    std::fs::create_dir_all(out_dir)?;

    let mut metrics_csv = String::from("stratum,tp,fp,fn,tn,precision,recall,f1,degenerate\n");
    for row in rows {
        metrics_csv.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{}\n",
            row.stratum,
            row.counts.tp,
            row.counts.fp,
            row.counts.fn_,
            row.counts.tn,
            row.metrics.precision,
            row.metrics.recall,
            row.metrics.f1,
            row.metrics.degenerate
        ));
    }
    std::fs::write(out_dir.join("metrics.csv"), metrics_csv)?;

    let mut gains_csv = String::from("label,base_f1,tuned_f1,gain_percent\n");
    for g in gains {
        gains_csv.push_str(&format!(
            "{},{:.6},{:.6},{:.2}\n",
            g.label, g.base_f1, g.tuned_f1, g.gain_percent
        ));
    }
    std::fs::write(out_dir.join("gains.csv"), gains_csv)?;

    let mut corr_csv = String::from("pearson_r,pearson_p,spearman_rho,spearman_p,n\n");
    if let Some(c) = correlation {
        corr_csv.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{}\n",
            c.pearson_r, c.pearson_p, c.spearman_rho, c.spearman_p, c.n
        ));
    }
    std::fs::write(out_dir.join("correlations.csv"), corr_csv)?;

    let summary = serde_json::json!({
        "schema_version": "report/1",
        "strata": rows,
        "gains": gains,
        "correlation": correlation,
        "flagged_results": flagged_count,
        "failed_sentences": failed_count,
        "degenerate": rows.iter().any(|r| r.metrics.degenerate),
    });
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn detection(index: usize, positive: bool, grade: EvidenceGrade, htype: Option<HallucinationType>) -> DetectionResult {
        DetectionResult {
            sentence_index: index,
            sentence_text: format!("sentence {index}."),
            hallucination_status: positive,
            htypes: htype.into_iter().collect::<BTreeSet<_>>(),
            grade,
            reasoning: "r".into(),
            signals: crate::detect::DetectionSignals {
                conflict: grade == EvidenceGrade::E4,
                support: 0.5,
                explicit: true,
            },
            confidence: None,
            retries_used: 0,
            context_digest: "d".into(),
            flagged: false,
            violations: Vec::new(),
        }
    }

    fn gold(index: usize, positive: bool, grade: Option<EvidenceGrade>, htype: Option<HallucinationType>) -> GoldLabel {
        GoldLabel {
            patient_id: "P1".into(),
            sentence_index: index,
            is_hallucination: positive,
            htype,
            grade,
        }
    }

    #[test]
    fn full_overlap_pairs_everything() {
        let gold_rows: Vec<GoldLabel> = (0..10)
            .map(|i| gold(i, true, Some(EvidenceGrade::E4), Some(HallucinationType::DiagnosisError)))
            .collect();
        let detections: Vec<(String, DetectionResult)> = (0..10)
            .map(|i| ("P1".to_string(), detection(i, true, EvidenceGrade::E4, Some(HallucinationType::DiagnosisError))))
            .collect();
        let pairs = align(&gold_rows, &detections).unwrap();
        assert_eq!(pairs.len(), 10);
        assert!(pairs.iter().all(|p| p.detection.is_some()));
    }

    #[test]
    fn detection_without_gold_pairs_with_implicit_negative() {
        let detections = vec![("P1".to_string(), detection(3, false, EvidenceGrade::E1, None))];
        let pairs = align(&[], &detections).unwrap();
        assert_eq!(pairs.len(), 1);
        assert!(!pairs[0].gold.is_hallucination);
    }

    #[test]
    fn duplicate_gold_key_is_an_error() {
        let rows = vec![
            gold(1, true, Some(EvidenceGrade::E4), Some(HallucinationType::ValueError)),
            gold(1, true, Some(EvidenceGrade::E4), Some(HallucinationType::TimeError)),
        ];
        assert!(matches!(
            align(&rows, &[]),
            Err(EvalError::DuplicateKey { sentence_index: 1, .. })
        ));
    }

    /// Enumerate the grade-by-stratum grid by hand: a gold-E4 positive
    /// predicted at each grade, under both strata.
    #[test]
    fn grade_stratum_grid_matches_hand_enumeration() {
        for (pred_grade, pred_positive) in [
            (EvidenceGrade::E1, false),
            (EvidenceGrade::E2, false),
            (EvidenceGrade::E3, true),
            (EvidenceGrade::E4, true),
        ] {
            let gold_rows = vec![gold(0, true, Some(EvidenceGrade::E4), Some(HallucinationType::DiagnosisError))];
            let detections = vec![(
                "P1".to_string(),
                detection(0, pred_positive, pred_grade, pred_positive.then_some(HallucinationType::DiagnosisError)),
            )];
            let pairs = align(&gold_rows, &detections).unwrap();

            let e4 = confusion(&pairs, Stratum::E4);
            let broad = confusion(&pairs, Stratum::E3E4);
            if pred_grade == EvidenceGrade::E4 && pred_positive {
                assert_eq!((e4.tp, e4.fn_), (1, 0));
            } else {
                // anything other than a positive E4 prediction misses the E4 gold
                assert_eq!((e4.tp, e4.fn_), (0, 1));
            }
            if pred_positive {
                assert_eq!((broad.tp, broad.fn_), (1, 0));
            } else {
                assert_eq!((broad.tp, broad.fn_), (0, 1));
            }
        }
    }

    #[test]
    fn gold_negative_predicted_e4_is_fp_in_both_strata() {
        let detections = vec![(
            "P1".to_string(),
            detection(0, true, EvidenceGrade::E4, Some(HallucinationType::ValueError)),
        )];
        let pairs = align(&[], &detections).unwrap();
        assert_eq!(confusion(&pairs, Stratum::E4).fp, 1);
        assert_eq!(confusion(&pairs, Stratum::E3E4).fp, 1);
    }

    #[test]
    fn f1_identity_reproduces_published_rows() {
        assert!((f1_from_pr(0.842, 0.745) - 0.791).abs() < 0.001);
        assert!((f1_from_pr(0.765, 0.909) - 0.831).abs() < 0.001);
    }

    #[test]
    fn zero_counts_are_degenerate_zeroes() {
        let m = prf(&ConfusionCounts::default(), Stratum::E4);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn f1_satisfies_harmonic_identity() {
        let m = prf(
            &ConfusionCounts { tp: 7, fp: 3, fn_: 2, tn: 5 },
            Stratum::E3E4,
        );
        let expected = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        assert!((m.f1 - expected).abs() < 1e-12);
    }

    #[test]
    fn ceiling_gain_reproduces_known_rows() {
        assert!((ceiling_gain(0.081, 0.482).unwrap() - 43.6).abs() < 0.15);
        assert!((ceiling_gain(0.632, 0.625).unwrap() - (-1.8)).abs() < 0.15);
        assert_eq!(ceiling_gain(0.4, 0.4).unwrap(), 0.0);
        assert!(matches!(ceiling_gain(1.0, 1.0), Err(EvalError::DegenerateBase)));
    }

    #[test]
    fn perfect_line_has_unit_correlations() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let report = correlations(&x, &y).unwrap();
        assert!((report.pearson_r - 1.0).abs() < 1e-12);
        assert!((report.spearman_rho - 1.0).abs() < 1e-12);
        assert!(report.pearson_p < 1e-9);
    }

    #[test]
    fn monotone_cubic_is_spearman_perfect_but_pearson_imperfect() {
        let x: Vec<f64> = vec![-2.0, -1.0, 0.0, 1.0, 2.0];
        let y: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        let report = correlations(&x, &y).unwrap();
        assert!((report.spearman_rho - 1.0).abs() < 1e-12);
        assert!(report.pearson_r < 1.0);
    }

    #[test]
    fn length_mismatch_and_short_input_error() {
        assert!(matches!(
            correlations(&[1.0, 2.0], &[1.0]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            correlations(&[1.0, 2.0], &[1.0, 2.0]),
            Err(EvalError::TooFewPoints { n: 2 })
        ));
    }

    #[test]
    fn tied_ranks_average() {
        let ranks = average_ranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(ranks, vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn exact_permutation_p_matches_intuition_on_tiny_input() {
        // strictly monotone triple: only 2 of 6 permutations reach |r| = 1
        let p = pearson_permutation_p(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap();
        assert!((p - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn reports_are_deterministic_and_complete() {
        let dir = tempfile::tempdir().unwrap();
        let rows = evaluate(&[]);
        emit_report(&rows, &[], None, 0, 0, dir.path()).unwrap();
        let a = std::fs::read(dir.path().join("metrics.csv")).unwrap();
        emit_report(&rows, &[], None, 0, 0, dir.path()).unwrap();
        let b = std::fs::read(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(a, b);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
                .unwrap();
        assert_eq!(summary["degenerate"], serde_json::json!(true));
        // E4 and E3+E4 sections always present
        let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(metrics.contains("E4"));
        assert!(metrics.contains("E3+E4"));
    }
}
