//! Tallies some-/any- usage per class and population, testing each learner
//! population against natives.
//!
//! cargo run --example usage_shares

use indefinite::analysis::{classify_with, usage_shares};
use indefinite::classifier::RuleConfig;
use indefinite::corpus::Population;
use indefinite::synth::synth_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut corpus = synth_corpus(9, 600, 0.15)?.corpus;
    for (i, r) in corpus.records.iter_mut().enumerate() {
        r.population = Population::ALL[i % Population::ALL.len()];
    }
    let rules = RuleConfig::default().compile()?;
    let dist = usage_shares(&corpus.records, classify_with(&rules));
    print!("{}", dist.to_csv(true));
    Ok(())
}
