//! Runs substitution-based detection on a synthetic corpus with corrupted
//! pronouns and prints the report.
//!
//! cargo run --release --example detect_synthetic [seed]

use indefinite::analysis::{detect_all, detection_report, ConfidenceFilter};
use indefinite::cli::training_seed;
use indefinite::lm::{NgramConfig, NgramModel};
use indefinite::synth::{synth_corpus, training_sentences};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(42);
    let synth = synth_corpus(seed, 200, 0.2)?;
    let model = NgramModel::train(&training_sentences(training_seed(seed), 5_000), NgramConfig::default())?;
    let outcomes = detect_all(&synth.corpus.records, &model)?;
    let pairs: Vec<_> = outcomes.into_iter().zip(synth.gold).collect();
    let report = detection_report(&pairs, ConfidenceFilter::AtLeast(0.8))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
