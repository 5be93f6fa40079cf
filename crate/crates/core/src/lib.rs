//! Tools for studying some-/any- indefinite pronoun usage.
//!
//! The pipeline runs from raw sentences ([`corpus`]) through rule-based usage
//! classification ([`classifier`]), five-annotator gold labels
//! ([`annotation`]) and language-model scoring ([`lm`]) to felicity detection
//! and group comparisons ([`analysis`]). [`typology`] builds the
//! colexification matrix and its two-dimensional embedding.

pub mod analysis;
pub mod annotation;
pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod lm;
pub mod stub;
pub mod synth;
pub mod typology;

pub use analysis::{detect, detect_all, detection_report, two_proportion_test, DetectionOutcome, DetectionReport};
pub use annotation::{aggregate, AnnotationAggregate, AnnotationItem, Choice, Gold};
pub use classifier::{classify_usage, CoarseClass, RuleConfig, Rules, UsageClass};
pub use corpus::{tokenize, Corpus, Family, Population, Pronoun, SentenceRecord};
pub use lm::{NgramConfig, NgramModel, RemoteConfig, RemoteScorer, Scorer};
pub use typology::{build_matrix, mds_project, ColexMatrix, ColexRecord, Embedding, Projection};
