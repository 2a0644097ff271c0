//! Rule-based sentence segmentation for clinical text.
//!
//! Boundaries fall after terminal punctuation and at line breaks, with
//! guards for decimal points ("98.6"), dose and title abbreviations
//! ("mg.", "Dr."), single initials, and lowercase continuations. Spans are
//! byte offsets into the source document: non-overlapping, ordered, and
//! separated only by whitespace, so the document reconstructs exactly from
//! spans plus separators.

use serde::{Deserialize, Serialize};

/// One sentence with its byte span in the source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceUnit {
    pub index: usize,
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Dotted tokens that do not end a sentence. Dose units (mg, mL) are
/// deliberately absent: discharge summaries write them without a trailing
/// period, so a period after a unit is a real boundary.
const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "st", "vs", "e.g", "i.e", "cf", "pt", "pts", "approx", "b.i.d",
    "t.i.d", "q.d", "q.i.d", "p.o", "i.v", "i.m", "a.m", "p.m", "etc", "inc", "jr", "sr", "prof",
];

/// Split `text` into sentence units.
///
/// Deterministic; returns an empty list for empty input. Spans never
/// include leading or trailing whitespace.
pub fn segment(text: &str) -> Vec<SentenceUnit> {
    let bytes = text.as_bytes();
    let mut units: Vec<SentenceUnit> = Vec::new();
    let mut sentence_start: Option<usize> = None;

    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut ci = 0;
    while ci < chars.len() {
        let (pos, c) = chars[ci];
        if sentence_start.is_none() && !c.is_whitespace() {
            sentence_start = Some(pos);
        }

        if let Some(start) = sentence_start {
            if c == '\n' {
                push_unit(text, start, pos, &mut units);
                sentence_start = None;
            } else if (c == '.' || c == '!' || c == '?') && is_boundary(text, bytes, &chars, ci) {
                // absorb closing quotes/brackets that belong to the sentence
                let mut end_ci = ci;
                while end_ci + 1 < chars.len() && matches!(chars[end_ci + 1].1, ')' | '"' | '\'' | ']') {
                    end_ci += 1;
                }
                let end = chars[end_ci].0 + chars[end_ci].1.len_utf8();
                push_unit(text, start, end, &mut units);
                sentence_start = None;
                ci = end_ci;
            }
        }
        ci += 1;
    }

    if let Some(start) = sentence_start {
        push_unit(text, start, text.len(), &mut units);
    }
    units
}

fn push_unit(text: &str, start: usize, end: usize, units: &mut Vec<SentenceUnit>) {
    let slice = &text[start..end];
    let trimmed = slice.trim_end();
    if trimmed.is_empty() {
        return;
    }
    let end = start + trimmed.len();
    units.push(SentenceUnit {
        index: units.len(),
        text: text[start..end].to_string(),
        start,
        end,
    });
}

/// Decide whether the terminal character at `chars[ci]` really ends a
/// sentence.
fn is_boundary(text: &str, bytes: &[u8], chars: &[(usize, char)], ci: usize) -> bool {
    let (pos, c) = chars[ci];

    if c == '.' {
        // decimal point: digit on both sides
        let prev_digit = pos > 0 && bytes[pos - 1].is_ascii_digit();
        let next_digit = ci + 1 < chars.len() && chars[ci + 1].1.is_ascii_digit();
        if prev_digit && next_digit {
            return false;
        }
        // abbreviation or single-initial guard
        let word = preceding_dotted_word(text, pos);
        if !word.is_empty() {
            let lower = word.to_lowercase();
            if ABBREVIATIONS.contains(&lower.as_str()) {
                return false;
            }
            if word.len() == 1 && word.chars().next().unwrap().is_alphabetic() {
                return false;
            }
        }
    }

    // peek at what follows: end of text is always a boundary
    let mut j = ci + 1;
    while j < chars.len() && chars[j].1 != '\n' && chars[j].1.is_whitespace() {
        j += 1;
    }
    if j >= chars.len() {
        return true;
    }
    // no space after the period (e.g. "J18.9" handled above, "x.y" paths): not a boundary
    if j == ci + 1 && chars[j].1 != '\n' {
        return false;
    }
    let next = chars[j].1;
    // a following line break always ends the sentence; otherwise require the
    // next sentence to open with something sentence-like
    next == '\n' || next.is_uppercase() || next.is_ascii_digit() || matches!(next, '(' | '[' | '"')
}

/// Letters-plus-dots token immediately before the period at `pos`.
fn preceding_dotted_word(text: &str, pos: usize) -> String {
    let head = &text[..pos];
    let start = head
        .rfind(|ch: char| !(ch.is_alphabetic() || ch == '.'))
        .map(|i| i + 1)
        .unwrap_or(0);
    head[start..].trim_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_terminal_periods_give_two_units() {
        let units = segment("Patient admitted. Started aspirin 81 mg daily.");
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].text, "Patient admitted.");
        assert_eq!(units[1].text, "Started aspirin 81 mg daily.");
    }

    #[test]
    fn decimal_point_is_not_a_boundary() {
        let units = segment("Temp 98.6 F on arrival.");
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].text, "Temp 98.6 F on arrival.");
    }

    #[test]
    fn empty_input_gives_no_units() {
        assert!(segment("").is_empty());
        assert!(segment("   \n  ").is_empty());
    }

    #[test]
    fn abbreviations_do_not_split() {
        let units = segment("Seen by Dr. Evans today. Plan unchanged.");
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].text, "Seen by Dr. Evans today.");
    }

    #[test]
    fn dose_units_end_sentences() {
        let units = segment("Prescribed azithromycin 500 mg. Underwent chest radiograph.");
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].text, "Prescribed azithromycin 500 mg.");
    }

    #[test]
    fn line_breaks_split_without_punctuation() {
        let units = segment("WBC elevated\nStarted antibiotics.");
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].text, "WBC elevated");
    }

    #[test]
    fn icd_codes_stay_whole() {
        let units = segment("Diagnosis J18.9 recorded. Improving.");
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].text, "Diagnosis J18.9 recorded.");
    }

    #[test]
    fn spans_reconstruct_the_document() {
        let doc = "Patient admitted.  Temp 98.6 F.\nGiven 5 mL saline. Discharged home!";
        let units = segment(doc);
        // ordered, non-overlapping, text matches span
        let mut prev_end = 0;
        for u in &units {
            assert!(u.start >= prev_end);
            assert_eq!(&doc[u.start..u.end], u.text);
            assert!(doc[prev_end..u.start].chars().all(char::is_whitespace));
            prev_end = u.end;
        }
        assert!(doc[prev_end..].chars().all(char::is_whitespace));
        // indices are contiguous from zero
        for (i, u) in units.iter().enumerate() {
            assert_eq!(u.index, i);
        }
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        let units = segment("Improved vs. baseline today. Stable.");
        assert_eq!(units.len(), 2);
    }
}
