//! Trains a small interpolated trigram model and compares sentence scores.
//!
//! cargo run --example train_ngram

use indefinite::lm::{NgramConfig, NgramModel};
use indefinite::synth::training_sentences;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = training_sentences(1, 2_000);
    let model = NgramModel::train(&train, NgramConfig::default())?;
    println!("vocabulary: {} types", model.vocab().len());
    for s in ["i did n't see anyone .", "i did n't see someone .", "i saw someone .", "i saw anyone ."] {
        let tokens: Vec<&str> = s.split(' ').collect();
        println!("{:>10.4}  {s}", model.score(&tokens));
    }

    let mut dump = Vec::new();
    model.write_to(&mut dump)?;
    let reloaded = NgramModel::read_from(&dump[..])?;
    println!("model dump: {} bytes; reload scores match: {}", dump.len(), {
        let t = ["i", "saw", "someone", "."];
        model.score(&t).to_bits() == reloaded.score(&t).to_bits()
    });
    Ok(())
}
