//! Classifies the bundled usage-example sentences with the default rules.
//!
//! cargo run --example classify_usage_examples

use indefinite::classifier::RuleConfig;
use indefinite::corpus::load_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/usage_examples.jsonl");
    let corpus = load_corpus(path)?;
    let rules = RuleConfig::default().compile()?;
    for r in &corpus.records {
        println!("{:<6} {}", rules.classify(r).to_string(), r.raw_text);
    }
    Ok(())
}
