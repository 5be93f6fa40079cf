//! Rule-based usage-class assignment for a marked pronoun occurrence.
//!
//! The rules look only at tokens: a `than` just before the pronoun marks a
//! comparison, a final `?` marks a question, and otherwise the clause to the
//! left of the pronoun is scanned for a conditional opener or a negator. The
//! scan stops at the first clause boundary, which keeps matrix-clause
//! negation ("I don't understand how anyone ...") out of embedded clauses.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SentenceRecord;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("prediction and gold sequences differ in length ({predictions} vs {gold})")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("cannot evaluate an empty sequence")]
    Empty,
    #[error("invalid rule config: {0}")]
    Config(String),
    #[error("unknown usage class `{0}`")]
    UnknownClass(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fine-grained usage classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UsageClass {
    /// specific
    SP,
    /// non-specific
    NS,
    /// question
    QU,
    /// conditional
    CD,
    /// indirect negation
    IN,
    /// direct negation
    DN,
    /// comparison
    CP,
    /// free choice
    FC,
}

impl UsageClass {
    pub const ALL: [UsageClass; 8] = [
        UsageClass::SP,
        UsageClass::NS,
        UsageClass::QU,
        UsageClass::CD,
        UsageClass::IN,
        UsageClass::DN,
        UsageClass::CP,
        UsageClass::FC,
    ];

    pub fn some_compatible(self) -> bool {
        self != UsageClass::FC
    }

    pub fn any_compatible(self) -> bool {
        !matches!(self, UsageClass::SP | UsageClass::NS)
    }

    pub fn coarse(self) -> CoarseClass {
        match self {
            UsageClass::DN => CoarseClass::DN,
            UsageClass::QU => CoarseClass::QU,
            UsageClass::CD => CoarseClass::CD,
            UsageClass::CP => CoarseClass::CP,
            UsageClass::SP | UsageClass::NS | UsageClass::FC | UsageClass::IN => CoarseClass::Mixed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UsageClass::SP => "SP",
            UsageClass::NS => "NS",
            UsageClass::QU => "QU",
            UsageClass::CD => "CD",
            UsageClass::IN => "IN",
            UsageClass::DN => "DN",
            UsageClass::CP => "CP",
            UsageClass::FC => "FC",
        }
    }
}

impl fmt::Display for UsageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UsageClass {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        UsageClass::ALL
            .into_iter()
            .find(|c| c.as_str() == upper)
            .ok_or_else(|| ClassifierError::UnknownClass(s.to_string()))
    }
}

/// The five-way grouping used for automatic classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoarseClass {
    DN,
    QU,
    CD,
    CP,
    #[serde(rename = "MIXED")]
    Mixed,
}

impl CoarseClass {
    pub const ALL: [CoarseClass; 5] = [
        CoarseClass::DN,
        CoarseClass::QU,
        CoarseClass::CD,
        CoarseClass::CP,
        CoarseClass::Mixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CoarseClass::DN => "DN",
            CoarseClass::QU => "QU",
            CoarseClass::CD => "CD",
            CoarseClass::CP => "CP",
            CoarseClass::Mixed => "MIXED",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for CoarseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoarseClass {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        CoarseClass::ALL
            .into_iter()
            .find(|c| c.as_str() == upper)
            .ok_or_else(|| ClassifierError::UnknownClass(s.to_string()))
    }
}

/// Lexical lists and window used by [`classify_usage`].
///
/// Loadable from a TOML key-value file; missing keys take the defaults.
/// Conditional openers may be multi-word (`"in case"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub negators: Vec<String>,
    pub conditional_openers: Vec<String>,
    pub clause_boundaries: Vec<String>,
    pub comparison_window: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        let list = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        RuleConfig {
            negators: list(&[
                "not", "n't", "never", "no", "none", "nothing", "nobody", "without", "neither", "nor",
                "hardly", "barely", "scarcely",
            ]),
            conditional_openers: list(&["if", "unless", "whether", "in case"]),
            clause_boundaries: list(&[
                ".", ",", ";", ":", "that", "who", "which", "how", "because", "but", "and", "than",
            ]),
            comparison_window: 2,
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.negators.is_empty() || self.conditional_openers.is_empty() || self.clause_boundaries.is_empty() {
            return Err(ClassifierError::Config("token lists must be non-empty".into()));
        }
        if self.comparison_window == 0 {
            return Err(ClassifierError::Config("comparison_window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<RuleConfig, ClassifierError> {
        let cfg: RuleConfig = toml::from_str(s).map_err(|e| ClassifierError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RuleConfig, ClassifierError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Lowercased lookup tables; build once and reuse across records.
    pub fn compile(&self) -> Result<Rules, ClassifierError> {
        self.validate()?;
        let set = |xs: &[String]| xs.iter().map(|s| s.to_lowercase()).collect::<HashSet<_>>();
        Ok(Rules {
            negators: set(&self.negators),
            openers: self
                .conditional_openers
                .iter()
                .map(|p| p.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>())
                .filter(|p| !p.is_empty())
                .collect(),
            boundaries: set(&self.clause_boundaries),
            window: self.comparison_window,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Rules {
    negators: HashSet<String>,
    openers: Vec<Vec<String>>,
    boundaries: HashSet<String>,
    window: usize,
}

impl Rules {
    pub fn classify(&self, record: &SentenceRecord) -> CoarseClass {
        self.classify_tokens(&record.tokens, record.ip_index)
    }

    pub fn classify_tokens<S: AsRef<str>>(&self, tokens: &[S], ip_index: usize) -> CoarseClass {
        let lower: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
        let ip = ip_index.min(lower.len());

        let window_start = ip.saturating_sub(self.window);
        if lower[window_start..ip].iter().any(|t| t == "than") {
            return CoarseClass::CP;
        }
        let final_punct = lower.iter().rev().find(|t| is_punctuation(t));
        if final_punct.is_some_and(|t| t == "?") {
            return CoarseClass::QU;
        }
        if self.scan_left(&lower, ip, |toks, i| self.opener_ends_at(toks, i)) {
            return CoarseClass::CD;
        }
        if self.scan_left(&lower, ip, |toks, i| self.negators.contains(&toks[i])) {
            return CoarseClass::DN;
        }
        CoarseClass::Mixed
    }

    /// Walks left from `ip - 1`; true if `hit` fires before a clause boundary.
    fn scan_left(&self, toks: &[String], ip: usize, hit: impl Fn(&[String], usize) -> bool) -> bool {
        for i in (0..ip).rev() {
            if hit(toks, i) {
                return true;
            }
            if self.boundaries.contains(&toks[i]) {
                return false;
            }
        }
        false
    }

    fn opener_ends_at(&self, toks: &[String], i: usize) -> bool {
        self.openers.iter().any(|phrase| {
            let n = phrase.len();
            n <= i + 1 && toks[i + 1 - n..=i] == phrase[..]
        })
    }
}

fn is_punctuation(t: &str) -> bool {
    !t.is_empty() && t.chars().all(|c| c.is_ascii_punctuation())
}

/// Classifies one record. For many records, compile the config once with
/// [`RuleConfig::compile`] instead.
pub fn classify_usage(record: &SentenceRecord, config: &RuleConfig) -> Result<CoarseClass, ClassifierError> {
    Ok(config.compile()?.classify(record))
}

/// One-vs-rest scores for a single class. `None` marks an undefined ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierEvaluation {
    pub per_class: BTreeMap<CoarseClass, ClassScores>,
    pub accuracy: f64,
    pub chance_baseline: f64,
    pub n: usize,
}

pub fn evaluate_classifier(
    predictions: &[CoarseClass],
    gold: &[CoarseClass],
) -> Result<ClassifierEvaluation, ClassifierError> {
    if predictions.len() != gold.len() {
        return Err(ClassifierError::LengthMismatch { predictions: predictions.len(), gold: gold.len() });
    }
    if gold.is_empty() {
        return Err(ClassifierError::Empty);
    }
    let mut per_class = BTreeMap::new();
    for class in CoarseClass::ALL {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&p, &g) in predictions.iter().zip(gold) {
            match (p == class, g == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        per_class.insert(class, ClassScores { precision, recall, f1, support: tp + fn_ });
    }
    let correct = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(ClassifierEvaluation {
        per_class,
        accuracy: correct as f64 / gold.len() as f64,
        chance_baseline: 1.0 / CoarseClass::ALL.len() as f64,
        n: gold.len(),
    })
}

pub(crate) fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}
