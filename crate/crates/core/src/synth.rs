//! Seeded template corpora with known felicity.
//!
//! Negated and interrogative templates call for an any- pronoun, plain
//! affirmative ones for a some- pronoun. A fixed fraction of sentences then
//! has its pronoun flipped, which makes those sentences the infelicitous gold.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::annotation::{aggregate, AnnotationAggregate, AnnotationItem, Choice, ANNOTATORS, DEFAULT_THRESHOLD};
use crate::corpus::{tokenize, Corpus, Family, Population, Pronoun, SentenceRecord};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("corpus size must be positive")]
    ZeroSize,
    #[error("corruption rate {0} outside [0, 1]")]
    BadRate(f64),
}

const SUBJECTS: &[&str] = &["I", "you", "we", "they", "he", "she", "my brother", "the teacher", "our neighbours"];
const QUESTION_SUBJECTS: &[&str] = &["you", "we", "they", "he", "she", "your sister", "the kids"];

/// (base, past) forms; no verb shares its base and past form.
const PERSON_VERBS: &[(&str, &str)] = &[
    ("call", "called"),
    ("meet", "met"),
    ("ask", "asked"),
    ("invite", "invited"),
    ("trust", "trusted"),
    ("help", "helped"),
    ("see", "saw"),
    ("hear", "heard"),
];
const THING_VERBS: &[(&str, &str)] = &[
    ("buy", "bought"),
    ("find", "found"),
    ("eat", "ate"),
    ("need", "needed"),
    ("want", "wanted"),
    ("cook", "cooked"),
    ("break", "broke"),
    ("bring", "brought"),
];
const TAILS: &[&str] = &["", "yesterday", "at the market", "last week", "there", "today", "in the city", "after school"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Frame {
    Affirmative,
    Negated,
    Never,
    Question,
}

impl Frame {
    fn felicitous(self) -> Family {
        match self {
            Frame::Affirmative => Family::Some,
            _ => Family::Any,
        }
    }
}

/// One felicitous sentence and the pronoun it uses.
fn sentence(rng: &mut impl Rng) -> (String, Pronoun) {
    let frame = *[Frame::Affirmative, Frame::Affirmative, Frame::Negated, Frame::Never, Frame::Question]
        .choose(rng)
        .expect("non-empty");
    let person = rng.random_bool(0.5);
    let (base, past) = *if person { PERSON_VERBS } else { THING_VERBS }.choose(rng).expect("non-empty");
    let pronoun = match (person, frame.felicitous()) {
        (true, Family::Some) => Pronoun::Someone,
        (true, Family::Any) => Pronoun::Anyone,
        (false, Family::Some) => Pronoun::Something,
        (false, Family::Any) => Pronoun::Anything,
    };
    let tail = *TAILS.choose(rng).expect("non-empty");
    let ip = pronoun.lemma();
    let body = match frame {
        Frame::Affirmative => format!("{} {past} {ip}", SUBJECTS.choose(rng).expect("non-empty")),
        Frame::Negated => format!("{} didn't {base} {ip}", SUBJECTS.choose(rng).expect("non-empty")),
        Frame::Never => format!("{} never {past} {ip}", SUBJECTS.choose(rng).expect("non-empty")),
        Frame::Question => {
            let aux = ["Did", "Can", "Will"].choose(rng).expect("non-empty");
            format!("{aux} {} {base} {ip}", QUESTION_SUBJECTS.choose(rng).expect("non-empty"))
        }
    };
    let end = if frame == Frame::Question { "?" } else { "." };
    let text = if tail.is_empty() { format!("{body}{end}") } else { format!("{body} {tail}{end}") };
    (capitalize(&text), pronoun)
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    /// Unanimous five-vote gold, aligned with `corpus.records`.
    pub gold: Vec<AnnotationAggregate>,
}

/// Generates `size` sentences and flips the pronoun in exactly
/// `round(size * corruption_rate)` of them.
pub fn synth_corpus(seed: u64, size: usize, corruption_rate: f64) -> Result<SynthCorpus, SynthError> {
    if size == 0 {
        return Err(SynthError::ZeroSize);
    }
    if !(0.0..=1.0).contains(&corruption_rate) {
        return Err(SynthError::BadRate(corruption_rate));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences: Vec<(String, Pronoun)> = (0..size).map(|_| sentence(&mut rng)).collect();
    let flips = (size as f64 * corruption_rate).round() as usize;
    let mut order: Vec<usize> = (0..size).collect();
    order.shuffle(&mut rng);
    let mut flipped = vec![false; size];
    for &i in &order[..flips] {
        flipped[i] = true;
    }

    let mut records = Vec::with_capacity(size);
    let mut gold = Vec::with_capacity(size);
    for (i, (text, felicitous)) in sentences.into_iter().enumerate() {
        let id = format!("synth-{i:05}");
        let mut record = SentenceRecord::from_text(&id, &text, Population::Learner)
            .pop()
            .expect("templates hold exactly one pronoun");
        if flipped[i] {
            record = record.substituted().expect("valid template record");
            record.raw_text = detokenize_like(&text, &record.tokens, record.ip_index);
        }
        let item = AnnotationItem {
            sentence_id: id,
            original: record.original,
            choices: vec![Choice::from_family(felicitous.family()); ANNOTATORS],
        };
        gold.push(aggregate(&item, DEFAULT_THRESHOLD).expect("five votes"));
        records.push(record);
    }
    let corpus = Corpus::new(records).expect("generated ids are unique");
    Ok(SynthCorpus { corpus, gold })
}

/// Rewrites the pronoun in the original text so the raw text keeps its
/// contractions and spacing.
fn detokenize_like(text: &str, tokens: &[String], ip_index: usize) -> String {
    let replacement = &tokens[ip_index];
    let mut out = Vec::new();
    let mut replaced = false;
    for word in text.split(' ') {
        let stem = word.trim_end_matches(['.', '?']);
        if !replaced && Pronoun::from_token(stem).is_some() {
            out.push(format!("{replacement}{}", &word[stem.len()..]));
            replaced = true;
        } else {
            out.push(word.to_string());
        }
    }
    let joined = out.join(" ");
    debug_assert_eq!(tokenize(&joined), tokens);
    joined
}

/// Felicitous tokenized sentences for language-model training.
pub fn training_sentences(seed: u64, count: usize) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| tokenize(&sentence(&mut rng).0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::Gold;

    #[test]
    fn no_corruption_means_all_felicitous() {
        let s = synth_corpus(1, 50, 0.0).unwrap();
        assert!(s.gold.iter().all(|g| g.gold == Gold::Felicitous));
    }

    #[test]
    fn exact_corruption_count() {
        let s = synth_corpus(7, 200, 0.2).unwrap();
        assert_eq!(s.gold.iter().filter(|g| g.gold == Gold::Infelicitous).count(), 40);
        for (r, g) in s.corpus.records.iter().zip(&s.gold) {
            assert_eq!(r.id, g.sentence_id);
            assert_eq!(r.original, g.original);
            assert_eq!(tokenize(&r.raw_text), r.tokens);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_corpus(3, 30, 0.5).unwrap(), synth_corpus(3, 30, 0.5).unwrap());
        assert_ne!(synth_corpus(3, 30, 0.5).unwrap(), synth_corpus(4, 30, 0.5).unwrap());
        assert_eq!(training_sentences(9, 10), training_sentences(9, 10));
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(synth_corpus(1, 0, 0.1), Err(SynthError::ZeroSize)));
        assert!(matches!(synth_corpus(1, 10, 1.5), Err(SynthError::BadRate(_))));
    }
}
