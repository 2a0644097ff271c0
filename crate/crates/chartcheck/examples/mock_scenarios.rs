//! Scripted backend playback: matchers, ordered responses, retry behavior,
//! and what happens on budget exhaustion.
//!
//! ```bash
//! cargo run --example mock_scenarios
//! ```

use chartcheck::llm::{ChatRequest, LlmClient, ScenarioEntry, ScriptedMock};

fn main() {
    let client = LlmClient::mock(ScriptedMock::new(
        vec![
            ScenarioEntry {
                stage: "detect".into(),
                matcher: "tuberculosis".into(),
                responses: vec!["specific response".into()],
                repeat_last: true,
            },
            ScenarioEntry {
                stage: "detect".into(),
                matcher: "".into(),
                responses: vec!["first generic".into(), "second generic".into()],
                repeat_last: false,
            },
        ],
        true,
    ));

    let request = |prompt: &str| {
        ChatRequest::new("detect_sentence@v1", prompt.to_string(), 0.0).tag("stage", "detect")
    };

    // the longest matching matcher wins over the catch-all
    println!(
        "prompt mentioning tuberculosis -> {:?}",
        client.complete(&request("judge: tuberculosis claim")).unwrap()
    );
    // the catch-all consumes its list in order
    println!(
        "generic prompt #1             -> {:?}",
        client.complete(&request("judge: plain claim")).unwrap()
    );
    println!(
        "generic prompt #2             -> {:?}",
        client.complete(&request("judge: another claim")).unwrap()
    );
    // a non-repeating entry exhausts
    println!(
        "generic prompt #3             -> {:?}",
        client.complete(&request("judge: one too many")).map_err(|e| e.to_string())
    );

    // every call was logged
    println!("\ncall log:");
    for entry in client.logs() {
        println!(
            "  backend={} attempt={} digest={} response={:?}",
            entry.backend_id, entry.attempt, entry.request_digest, entry.response_text
        );
    }
}
