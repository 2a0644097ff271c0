//! Deterministic scripted backend for offline runs and tests.
//!
//! A scenario is an ordered list of entries keyed by (stage, prompt
//! substring). The most specific entry wins — longest matcher first — so
//! per-sentence responses coexist with a catch-all, and concurrent batch
//! order cannot change which response a given sentence receives.

use super::{ChatRequest, LlmError};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Mutex;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioEntry {
    /// Pipeline stage this entry answers ("extract", "applicability",
    /// "generate", "detect", "summarize").
    pub stage: String,
    /// Substring of the rendered prompt; empty matches every prompt.
    #[serde(default)]
    pub matcher: String,
    /// Responses consumed in order.
    pub responses: Vec<String>,
    /// Keep replaying the final response once the list is exhausted.
    #[serde(default = "default_true")]
    pub repeat_last: bool,
}

pub struct ScriptedMock {
    entries: Vec<ScenarioEntry>,
    cursors: Mutex<Vec<usize>>,
    strict: bool,
}

impl ScriptedMock {
    pub fn new(entries: Vec<ScenarioEntry>, strict: bool) -> Self {
        let cursors = Mutex::new(vec![0; entries.len()]);
        ScriptedMock {
            entries,
            cursors,
            strict,
        }
    }

    pub fn empty() -> Self {
        ScriptedMock::new(Vec::new(), true)
    }

    /// Load a scenario file: a JSON array of entries.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)?;
        let entries: Vec<ScenarioEntry> = serde_json::from_str(&text)
            .map_err(|e| LlmError::Config(format!("bad scenario file {}: {e}", path.display())))?;
        Ok(ScriptedMock::new(entries, true))
    }

    pub fn respond(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let stage = request.stage();
        let prompt = &request.rendered_prompt;

        // most specific matcher wins; ties resolve to file order
        let mut best: Option<(usize, usize)> = None;
        for (i, entry) in self.entries.iter().enumerate() {
            if entry.stage == stage && prompt.contains(&entry.matcher) {
                let specificity = entry.matcher.len();
                if best.is_none_or(|(_, s)| specificity > s) {
                    best = Some((i, specificity));
                }
            }
        }

        let index = match best {
            Some((index, _)) => index,
            None if self.strict => {
                return Err(LlmError::UnmatchedRequest {
                    stage: stage.to_string(),
                })
            }
            None => {
                log::warn!("no scenario entry for stage {stage:?}; returning an empty object");
                return Ok("{}".to_string());
            }
        };

        let entry = &self.entries[index];
        let mut cursors = self.cursors.lock().unwrap();
        let cursor = cursors[index];
        if cursor < entry.responses.len() {
            cursors[index] += 1;
            Ok(entry.responses[cursor].clone())
        } else if entry.repeat_last && !entry.responses.is_empty() {
            Ok(entry.responses.last().unwrap().clone())
        } else {
            Err(LlmError::MockExhausted {
                stage: entry.stage.clone(),
                matcher: entry.matcher.clone(),
            })
        }
    }

    /// Panics when a non-repeating entry still has unconsumed responses.
    pub fn assert_fully_consumed(&self) {
        let cursors = self.cursors.lock().unwrap();
        for (entry, &used) in self.entries.iter().zip(cursors.iter()) {
            if !entry.repeat_last && used < entry.responses.len() {
                panic!(
                    "scenario entry (stage={}, matcher={:?}) has {} unconsumed responses",
                    entry.stage,
                    entry.matcher,
                    entry.responses.len() - used
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(stage: &str, prompt: &str) -> ChatRequest {
        ChatRequest::new("t@v1", prompt.to_string(), 0.0).tag("stage", stage)
    }

    #[test]
    fn longest_matcher_wins_over_catch_all() {
        let mock = ScriptedMock::new(
            vec![
                ScenarioEntry {
                    stage: "detect".into(),
                    matcher: "".into(),
                    responses: vec!["generic".into()],
                    repeat_last: true,
                },
                ScenarioEntry {
                    stage: "detect".into(),
                    matcher: "tuberculosis".into(),
                    responses: vec!["specific".into()],
                    repeat_last: true,
                },
            ],
            true,
        );
        assert_eq!(
            mock.respond(&req("detect", "sentence about tuberculosis")).unwrap(),
            "specific"
        );
        assert_eq!(mock.respond(&req("detect", "plain sentence")).unwrap(), "generic");
    }

    #[test]
    fn unmatched_stage_is_an_error() {
        let mock = ScriptedMock::new(
            vec![ScenarioEntry {
                stage: "detect".into(),
                matcher: "".into(),
                responses: vec!["x".into()],
                repeat_last: true,
            }],
            true,
        );
        assert!(matches!(
            mock.respond(&req("generate", "anything")),
            Err(LlmError::UnmatchedRequest { .. })
        ));
    }

    #[test]
    fn repeat_last_keeps_replaying() {
        let mock = ScriptedMock::new(
            vec![ScenarioEntry {
                stage: "detect".into(),
                matcher: "".into(),
                responses: vec!["a".into(), "b".into()],
                repeat_last: true,
            }],
            true,
        );
        let r = req("detect", "p");
        assert_eq!(mock.respond(&r).unwrap(), "a");
        assert_eq!(mock.respond(&r).unwrap(), "b");
        assert_eq!(mock.respond(&r).unwrap(), "b");
    }
}
