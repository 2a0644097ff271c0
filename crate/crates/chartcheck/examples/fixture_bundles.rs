//! Generate synthetic patient bundles, load one back, and validate it.
//!
//! ```bash
//! cargo run --example fixture_bundles
//! ```

use chartcheck::ingest::{generate_fixture, load_bundle, validate_bundle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    generate_fixture(42, 5, dir.path())?;
    println!("wrote 5 patient bundles under {}", dir.path().display());

    let record = load_bundle(dir.path(), "P0003")?;
    println!("\npatient {}", record.patient_id);
    for d in &record.diagnoses {
        println!("  diagnosis {} ({}) seq {}", d.label, d.code, d.seq);
    }
    println!("  triage: {:?}", record.triage);
    println!("  target text: {}", record.target_text);

    let warnings = validate_bundle(&record);
    println!("\nvalidation warnings: {}", warnings.len());
    for w in warnings {
        println!("  {w}");
    }
    Ok(())
}
