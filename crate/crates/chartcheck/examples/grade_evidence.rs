//! The four-branch evidence grading function and the consistency rules
//! that bind verdicts, grades, and reasoning together.
//!
//! ```bash
//! cargo run --example grade_evidence
//! ```

use chartcheck::detect::{grade_evidence, DetectionSignals, GradingConfig};
use chartcheck::structured::check_consistency;
use chartcheck::taxonomy::EvidenceGrade;

fn main() {
    let cfg = GradingConfig::default();
    println!("support threshold tau_s = {}", cfg.tau_s);
    println!("\nconflict  support  explicit  ->  grade");
    for (conflict, support, explicit) in [
        (true, 0.9, true),
        (false, 0.2, false),
        (false, 0.5, false), // exactly at the threshold: supported, not E3
        (false, 0.8, false),
        (false, 0.8, true),
    ] {
        let grade = grade_evidence(
            &DetectionSignals {
                conflict,
                support,
                explicit,
            },
            &cfg,
        );
        println!(
            "{:>8}  {:>7}  {:>8}  ->  {}",
            conflict as u8, support, explicit as u8, grade
        );
    }

    println!("\nconsistency rules:");
    let cases = [
        (true, EvidenceGrade::E4, "contradicts the record [ent:ab12cd34]"),
        (true, EvidenceGrade::E4, "contradicts the record, trust me"),
        (true, EvidenceGrade::E3, "no supporting record exists for this claim"),
        (true, EvidenceGrade::E2, "flagged but only weakly supported [ent:x]"),
        (false, EvidenceGrade::E4, "all good [ent:x]"),
    ];
    for (status, grade, reasoning) in cases {
        let outcome = check_consistency(status, grade, reasoning);
        let verdict = if outcome.ok {
            "ok".to_string()
        } else {
            outcome
                .violations
                .iter()
                .map(|v| v.rule_id.clone())
                .collect::<Vec<_>>()
                .join(", ")
        };
        println!("  y={status} grade={grade} reasoning={reasoning:?}\n    -> {verdict}");
    }
}
