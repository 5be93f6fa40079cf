//! Aggregates five-way annotations into gold labels at two thresholds.
//!
//! cargo run --example aggregate_annotations

use indefinite::annotation::{aggregate_all, infelicity_rate, load_annotations};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/usage_examples_annotations.csv");
    let items = load_annotations(path)?;
    let aggregates = aggregate_all(&items, 0.6)?;
    println!("{:<16} {:<8} {:>5}  {:<16} {:<16}", "sentence", "original", "conf", "gold@0.6", "gold@0.8");
    for a in &aggregates {
        println!(
            "{:<16} {:<8} {:>5.2}  {:<16} {:<16}",
            a.sentence_id,
            a.original.to_string(),
            a.confidence,
            a.gold.as_str(),
            a.gold_at(0.8).as_str()
        );
    }
    for t in [0.6, 0.8] {
        println!("infelicity rate at {t}: {:.3}", infelicity_rate(&aggregates, t)?);
    }
    Ok(())
}
