//! Extraction and bounded repair of messy model output.
//!
//! ```bash
//! cargo run --example repair_json
//! ```

use chartcheck::structured::{extract_json, repair_json};

fn main() {
    let raw = "Sure! Here is the result:\n```json\n{\"evidence_grade\": \"E4\"}\n```\nLet me know.";
    println!("extract_json on fenced chat output:");
    println!("  {:?}", extract_json(raw).unwrap());

    println!("\nrepair_json on common failure shapes:");
    for broken in [
        "{'evidence_grade': 'E4',}",
        "{\"evidence_grade\": E4}",
        "{hallucination_status: true, evidence_grade: \"E3\"}",
        "{\"signals\": {\"conflict\": 1, \"support\": 0.1",
        "{\"reasoning\": \"cut off mid-sent",
    ] {
        match repair_json(broken) {
            Ok((fixed, rules)) => {
                println!("  {broken:?}\n    -> {fixed:?}   rules: {rules:?}")
            }
            Err(e) => println!("  {broken:?}\n    -> unrepairable: {e}"),
        }
    }

    println!("\nvalid input passes through byte-identical:");
    let valid = "{\"a\": [1, 2, 3]}";
    let (same, rules) = repair_json(valid).unwrap();
    println!("  {valid:?} -> {same:?}   rules: {rules:?}");

    println!("\nand some things are beyond repair:");
    match repair_json("{\"a\": ") {
        Err(e) => println!("  {:?} -> {e}", "{\"a\": "),
        Ok(_) => unreachable!(),
    }
}
