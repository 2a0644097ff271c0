//! The seven error types a summary sentence can carry.
//!
//! Six of them describe direct conflicts with recorded facts (wrong
//! diagnosis, medication, exam result, time, value, or a flipped negation);
//! the seventh, [`HallucinationType::InventedFact`], is a claim with no
//! record basis at all. The distinction drives the generation-side evidence
//! grade: conflict types are annotated E4, invented facts E3.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Error category for a hallucinated sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationType {
    DiagnosisError,
    MedicationError,
    ExamResultError,
    TimeError,
    ValueError,
    NegationError,
    InventedFact,
}

impl HallucinationType {
    /// All seven types, in taxonomy order.
    pub const ALL: [HallucinationType; 7] = [
        HallucinationType::DiagnosisError,
        HallucinationType::MedicationError,
        HallucinationType::ExamResultError,
        HallucinationType::TimeError,
        HallucinationType::ValueError,
        HallucinationType::NegationError,
        HallucinationType::InventedFact,
    ];

    /// Snake-case wire name used in sample files and LLM schemas.
    pub fn as_str(&self) -> &'static str {
        match self {
            HallucinationType::DiagnosisError => "diagnosis_error",
            HallucinationType::MedicationError => "medication_error",
            HallucinationType::ExamResultError => "exam_result_error",
            HallucinationType::TimeError => "time_error",
            HallucinationType::ValueError => "value_error",
            HallucinationType::NegationError => "negation_error",
            HallucinationType::InventedFact => "invented_fact",
        }
    }

    /// True for the six types that directly conflict with recorded evidence.
    pub fn is_conflict_type(&self) -> bool {
        !matches!(self, HallucinationType::InventedFact)
    }
}

impl fmt::Display for HallucinationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Four-level evidence grade, ordered by severity: E1 strong explicit
/// support, E2 indirect support, E3 no support (suspicious), E4 direct
/// contradiction. E4 is the safety-critical stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EvidenceGrade {
    E1,
    E2,
    E3,
    E4,
}

impl EvidenceGrade {
    pub const ALL: [EvidenceGrade; 4] = [
        EvidenceGrade::E1,
        EvidenceGrade::E2,
        EvidenceGrade::E3,
        EvidenceGrade::E4,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EvidenceGrade::E1 => "E1",
            EvidenceGrade::E2 => "E2",
            EvidenceGrade::E3 => "E3",
            EvidenceGrade::E4 => "E4",
        }
    }
}

impl fmt::Display for EvidenceGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvidenceGrade {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EvidenceGrade::ALL
            .iter()
            .find(|g| g.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown evidence grade: {s:?}"))
    }
}

impl FromStr for HallucinationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HallucinationType::ALL
            .iter()
            .find(|t| t.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown hallucination type: {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_seven_types_round_trip() {
        assert_eq!(HallucinationType::ALL.len(), 7);
        for t in HallucinationType::ALL {
            assert_eq!(t.as_str().parse::<HallucinationType>().unwrap(), t);
        }
    }

    #[test]
    fn only_invented_fact_is_non_conflict() {
        let non_conflict: Vec<_> = HallucinationType::ALL
            .iter()
            .filter(|t| !t.is_conflict_type())
            .collect();
        assert_eq!(non_conflict, vec![&HallucinationType::InventedFact]);
    }

    #[test]
    fn grades_order_by_severity() {
        assert!(EvidenceGrade::E1 < EvidenceGrade::E2);
        assert!(EvidenceGrade::E2 < EvidenceGrade::E3);
        assert!(EvidenceGrade::E3 < EvidenceGrade::E4);
        assert_eq!("E4".parse::<EvidenceGrade>().unwrap(), EvidenceGrade::E4);
        assert!("E5".parse::<EvidenceGrade>().is_err());
    }
}
