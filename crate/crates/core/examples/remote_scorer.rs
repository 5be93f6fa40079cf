//! Serves an n-gram model over the /score protocol with the in-process stub
//! server and scores sentences through the HTTP client.
//!
//! cargo run --example remote_scorer

use std::sync::Arc;

use indefinite::lm::{NgramConfig, NgramModel, RemoteConfig, RemoteScorer};
use indefinite::stub::{check_conformance, StubServer};
use indefinite::synth::training_sentences;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Arc::new(NgramModel::train(&training_sentences(2, 1_000), NgramConfig::default())?);
    let served = Arc::clone(&model);
    let stub = StubServer::scoring(move |s| served.score(&s.split(' ').collect::<Vec<_>>()))?;
    check_conformance(&stub.url())?;
    println!("stub listening on {}", stub.url());

    let mut config = RemoteConfig::new(stub.url());
    config.batch_size = 2;
    let scorer = RemoteScorer::new(config);
    let sentences: Vec<String> =
        ["i did n't see anyone .", "i saw someone .", "did you see anyone ?"].iter().map(|s| s.to_string()).collect();
    let scores = scorer.score_sentences(&sentences)?;
    for (s, score) in sentences.iter().zip(&scores) {
        let local = model.score(&s.split(' ').collect::<Vec<_>>());
        println!("{score:>10.4} (local {local:>10.4})  {s}");
    }
    println!("requests served: {}", stub.requests());
    Ok(())
}
