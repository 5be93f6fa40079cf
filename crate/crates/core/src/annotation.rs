//! Five-way forced-choice annotation: majority, confidence and gold felicity.
//!
//! Each sentence is judged by five annotators who pick the some- form, the
//! any- form, or "other". Confidence is the share of votes held by the most
//! frequent choice. An item is only called infelicitous when the confident
//! majority disagrees with the pronoun family the author actually used.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Family, Pronoun, SentenceRecord};

pub const ANNOTATORS: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("item `{id}` has {found} choices, expected {ANNOTATORS}")]
    WrongChoiceCount { id: String, found: usize },
    #[error("threshold {0} outside (0.5, 1.0]")]
    BadThreshold(f64),
    #[error("no items to aggregate")]
    Empty,
    #[error("labelings differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two annotators")]
    TooFewAnnotators,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Choice {
    SomeForm,
    AnyForm,
    Other,
}

impl Choice {
    pub const ALL: [Choice; 3] = [Choice::SomeForm, Choice::AnyForm, Choice::Other];

    pub fn family(self) -> Option<Family> {
        match self {
            Choice::SomeForm => Some(Family::Some),
            Choice::AnyForm => Some(Family::Any),
            Choice::Other => None,
        }
    }

    pub fn from_family(f: Family) -> Choice {
        match f {
            Family::Some => Choice::SomeForm,
            Family::Any => Choice::AnyForm,
        }
    }

    pub fn code(self) -> char {
        match self {
            Choice::SomeForm => 'S',
            Choice::AnyForm => 'A',
            Choice::Other => 'O',
        }
    }
}

impl FromStr for Choice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S" | "SOME" | "SOME_FORM" => Ok(Choice::SomeForm),
            "A" | "ANY" | "ANY_FORM" => Ok(Choice::AnyForm),
            "O" | "OTHER" => Ok(Choice::Other),
            other => Err(format!("unknown choice code `{other}`")),
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationItem {
    pub sentence_id: String,
    pub original: Pronoun,
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Gold {
    Felicitous,
    Infelicitous,
    LowConfidence,
    OtherMajority,
}

impl Gold {
    pub fn as_str(self) -> &'static str {
        match self {
            Gold::Felicitous => "FELICITOUS",
            Gold::Infelicitous => "INFELICITOUS",
            Gold::LowConfidence => "LOW_CONFIDENCE",
            Gold::OtherMajority => "OTHER_MAJORITY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationAggregate {
    pub sentence_id: String,
    pub original: Pronoun,
    pub majority: Choice,
    /// Max vote count over five.
    pub confidence: f64,
    pub votes: u8,
    /// Two choices share the top count.
    pub tied: bool,
    pub gold: Gold,
}

impl AnnotationAggregate {
    /// Re-derives the gold label at another threshold.
    pub fn gold_at(&self, threshold: f64) -> Gold {
        gold_label(self.original, self.majority, self.votes, self.tied, threshold)
    }
}

fn check_threshold(threshold: f64) -> Result<(), AnnotationError> {
    if threshold > 0.5 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(AnnotationError::BadThreshold(threshold))
    }
}

fn gold_label(original: Pronoun, majority: Choice, votes: u8, tied: bool, threshold: f64) -> Gold {
    // compare on the vote grid so 0.8 stays 0.8
    if tied || f64::from(votes) < threshold * ANNOTATORS as f64 - 1e-9 {
        return Gold::LowConfidence;
    }
    match majority.family() {
        None => Gold::OtherMajority,
        Some(f) if f == original.family() => Gold::Felicitous,
        Some(_) => Gold::Infelicitous,
    }
}

/// Aggregates one item's five votes.
///
/// When two choices tie for the top count the item is low-confidence; the
/// reported majority is then the tied choice matching the original family,
/// else the first tied choice in `S, A, O` order.
pub fn aggregate(item: &AnnotationItem, threshold: f64) -> Result<AnnotationAggregate, AnnotationError> {
    check_threshold(threshold)?;
    if item.choices.len() != ANNOTATORS {
        return Err(AnnotationError::WrongChoiceCount { id: item.sentence_id.clone(), found: item.choices.len() });
    }
    let mut counts = [0u8; 3];
    for c in &item.choices {
        counts[*c as usize] += 1;
    }
    let top = *counts.iter().max().expect("three counters");
    let tied_choices: Vec<Choice> = Choice::ALL.into_iter().filter(|c| counts[*c as usize] == top).collect();
    let tied = tied_choices.len() > 1;
    let preferred = Choice::from_family(item.original.family());
    let majority = if tied_choices.contains(&preferred) { preferred } else { tied_choices[0] };
    Ok(AnnotationAggregate {
        sentence_id: item.sentence_id.clone(),
        original: item.original,
        majority,
        confidence: f64::from(top) / ANNOTATORS as f64,
        votes: top,
        tied,
        gold: gold_label(item.original, majority, top, tied, threshold),
    })
}

pub fn aggregate_all(items: &[AnnotationItem], threshold: f64) -> Result<Vec<AnnotationAggregate>, AnnotationError> {
    items.iter().map(|i| aggregate(i, threshold)).collect()
}

/// Infelicitous share among items whose majority is not "other".
pub fn infelicity_rate(aggregates: &[AnnotationAggregate], threshold: f64) -> Result<f64, AnnotationError> {
    check_threshold(threshold)?;
    if aggregates.is_empty() {
        return Err(AnnotationError::Empty);
    }
    let golds: Vec<Gold> = aggregates.iter().map(|a| a.gold_at(threshold)).collect();
    let denom = golds.iter().filter(|g| **g != Gold::OtherMajority).count();
    if denom == 0 {
        return Err(AnnotationError::Empty);
    }
    let infelicitous = golds.iter().filter(|g| **g == Gold::Infelicitous).count();
    Ok(infelicitous as f64 / denom as f64)
}

/// Cohen's kappa for two annotators.
///
/// Returns `None` when chance agreement is 1 but observed agreement is not.
pub fn pairwise_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<Option<f64>, AnnotationError> {
    if a.len() != b.len() {
        return Err(AnnotationError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(AnnotationError::Empty);
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut marg_a: HashMap<&T, usize> = HashMap::new();
    let mut marg_b: HashMap<&T, usize> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *marg_a.entry(x).or_default() += 1;
        *marg_b.entry(y).or_default() += 1;
    }
    let expected: f64 = marg_a
        .iter()
        .map(|(k, &ca)| ca as f64 / n * marg_b.get(k).copied().unwrap_or(0) as f64 / n)
        .sum();
    if (1.0 - expected).abs() < 1e-15 {
        return Ok((observed >= 1.0).then_some(1.0));
    }
    Ok(Some((observed - expected) / (1.0 - expected)))
}

/// Mean Cohen's kappa over all unordered annotator pairs.
///
/// Undefined pairs are skipped; `None` if no pair is defined.
pub fn mean_kappa<T: Eq + Hash>(labelings: &[Vec<T>]) -> Result<Option<f64>, AnnotationError> {
    if labelings.len() < 2 {
        return Err(AnnotationError::TooFewAnnotators);
    }
    let mut sum = 0.0;
    let mut defined = 0usize;
    for i in 0..labelings.len() {
        for j in i + 1..labelings.len() {
            if let Some(k) = pairwise_kappa(&labelings[i], &labelings[j])? {
                sum += k;
                defined += 1;
            }
        }
    }
    Ok((defined > 0).then(|| sum / defined as f64))
}

/// Parses `sentence_id,original,c1,c2,c3,c4,c5` rows with choice codes S/A/O.
///
/// A first row whose first field is `sentence_id` is treated as a header.
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationItem>, AnnotationError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| AnnotationError::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if items.is_empty() && fields[0].eq_ignore_ascii_case("sentence_id") {
            continue;
        }
        if fields.len() != 2 + ANNOTATORS {
            return Err(err(format!("expected {} fields, found {}", 2 + ANNOTATORS, fields.len())));
        }
        let original: Pronoun = fields[1].parse().map_err(|e: crate::corpus::CorpusError| err(e.to_string()))?;
        let choices = fields[2..].iter().map(|c| c.parse::<Choice>().map_err(err)).collect::<Result<Vec<_>, _>>()?;
        items.push(AnnotationItem { sentence_id: fields[0].to_string(), original, choices });
    }
    Ok(items)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationItem>, AnnotationError> {
    parse_annotations(&std::fs::read_to_string(path)?)
}

/// Idiomatic pronoun uses excluded from annotation statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdiomStoplist {
    patterns: Vec<Vec<String>>,
}

/// Stand-in idiom list; replace with a curated one for real studies.
pub const DEFAULT_IDIOMS: &[&str] = &[
    "or something",
    "or anything",
    "something like that",
    "anything but",
    "if anything",
    "something else",
    "anything else",
    "something of a",
];

impl Default for IdiomStoplist {
    fn default() -> Self {
        IdiomStoplist::new(DEFAULT_IDIOMS.iter().copied())
    }
}

impl IdiomStoplist {
    pub fn new<'a>(patterns: impl IntoIterator<Item = &'a str>) -> Self {
        IdiomStoplist {
            patterns: patterns
                .into_iter()
                .map(|p| p.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>())
                .filter(|p| !p.is_empty())
                .collect(),
        }
    }

    /// One pattern per line; `#` comments and blank lines are ignored.
    pub fn parse(text: &str) -> Self {
        IdiomStoplist::new(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// True when some pattern occurs in the sentence covering the target pronoun.
    pub fn matches(&self, record: &SentenceRecord) -> bool {
        let lower: Vec<String> = record.tokens.iter().map(|t| t.to_lowercase()).collect();
        let ip = record.ip_index;
        self.patterns.iter().any(|p| {
            let n = p.len();
            let first = ip.saturating_sub(n - 1);
            (first..=ip).any(|start| start + n <= lower.len() && lower[start..start + n] == p[..])
        })
    }
}

/// One line of a gold file: an aggregate, optionally joined with its sentence.
///
/// The JSON object carries `sentence_id`, `original`, `majority`,
/// `confidence`, `votes`, `tied` and `gold`; when a sentence is attached its
/// corpus fields (`id`, `text`, `ip_index`, `population`, extras) sit in the
/// same object.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldEntry {
    pub aggregate: AnnotationAggregate,
    pub record: Option<SentenceRecord>,
}

const GOLD_FIELDS: [&str; 6] = ["sentence_id", "majority", "confidence", "votes", "tied", "gold"];

impl GoldEntry {
    pub fn to_json_line(&self) -> String {
        let mut obj = self.record.as_ref().map(SentenceRecord::to_json).unwrap_or_default();
        let agg = serde_json::to_value(&self.aggregate).expect("aggregate serializes");
        if let serde_json::Value::Object(fields) = agg {
            for (k, v) in fields {
                obj.insert(k, v);
            }
        }
        obj.insert("original".into(), serde_json::Value::from(self.aggregate.original.lemma()));
        serde_json::Value::Object(obj).to_string()
    }

    pub fn from_json_line(line: &str, line_no: usize) -> Result<GoldEntry, AnnotationError> {
        let err = |message: String| AnnotationError::Parse { line: line_no, message };
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let serde_json::Value::Object(mut obj) = value else {
            return Err(err("expected a JSON object".into()));
        };
        let mut agg_obj = serde_json::Map::new();
        for key in GOLD_FIELDS {
            if let Some(v) = obj.remove(key) {
                agg_obj.insert(key.into(), v);
            }
        }
        let original = obj.get("original").cloned().ok_or_else(|| err("missing field `original`".into()))?;
        let original: Pronoun = original
            .as_str()
            .ok_or_else(|| err("field `original` must be a string".into()))?
            .parse()
            .map_err(|e: crate::corpus::CorpusError| err(e.to_string()))?;
        agg_obj.insert("original".into(), serde_json::Value::from(original.lemma()));
        let aggregate: AnnotationAggregate =
            serde_json::from_value(serde_json::Value::Object(agg_obj)).map_err(|e| err(e.to_string()))?;
        let record = if obj.contains_key("text") {
            let r = SentenceRecord::from_json(obj).map_err(|e| err(e.to_string()))?;
            if r.id != aggregate.sentence_id || r.original != aggregate.original {
                return Err(err(format!("sentence `{}` does not match its annotation", r.id)));
            }
            Some(r)
        } else {
            None
        };
        Ok(GoldEntry { aggregate, record })
    }
}

pub fn parse_gold(text: &str) -> Result<Vec<GoldEntry>, AnnotationError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| GoldEntry::from_json_line(l, i + 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Population;
    use Choice::*;

    fn item(original: Pronoun, choices: &[Choice]) -> AnnotationItem {
        AnnotationItem { sentence_id: "x".into(), original, choices: choices.to_vec() }
    }

    #[test]
    fn anchor_cases() {
        let a = aggregate(&item(Pronoun::Something, &[AnyForm; 5]), 0.8).unwrap();
        assert_eq!((a.majority, a.confidence, a.gold), (AnyForm, 1.0, Gold::Infelicitous));

        let a = aggregate(&item(Pronoun::Anyone, &[AnyForm, AnyForm, SomeForm, AnyForm, AnyForm]), 0.8).unwrap();
        assert_eq!((a.majority, a.confidence, a.gold), (AnyForm, 0.8, Gold::Felicitous));

        let a = aggregate(&item(Pronoun::Someone, &[AnyForm, SomeForm, AnyForm, SomeForm, AnyForm]), 0.8).unwrap();
        assert_eq!((a.majority, a.confidence, a.gold), (AnyForm, 0.6, Gold::LowConfidence));
    }

    #[test]
    fn other_majority_and_ties() {
        let a = aggregate(&item(Pronoun::Someone, &[Other, Other, Other, Other, SomeForm]), 0.8).unwrap();
        assert_eq!(a.gold, Gold::OtherMajority);
        let a = aggregate(&item(Pronoun::Anything, &[Other, SomeForm, Other, SomeForm, AnyForm]), 0.8).unwrap();
        assert!(a.tied);
        assert_eq!(a.majority, SomeForm);
        assert_eq!(a.gold, Gold::LowConfidence);
        assert_eq!(a.confidence, 0.4);
        let a = aggregate(&item(Pronoun::Anything, &[Other, SomeForm, Other, SomeForm, AnyForm]), 0.6).unwrap();
        assert_eq!(a.gold, Gold::LowConfidence);
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            aggregate(&item(Pronoun::Anyone, &[AnyForm; 4]), 0.8),
            Err(AnnotationError::WrongChoiceCount { found: 4, .. })
        ));
        assert!(matches!(aggregate(&item(Pronoun::Anyone, &[AnyForm; 5]), 0.5), Err(AnnotationError::BadThreshold(_))));
        assert!(infelicity_rate(&[], 0.8).is_err());
    }

    #[test]
    fn infelicity_rate_counts() {
        let mut aggs = Vec::new();
        for i in 0..100 {
            let choices = if i < 3 { [AnyForm; 5] } else { [SomeForm; 5] };
            aggs.push(aggregate(&item(Pronoun::Someone, &choices), 0.8).unwrap());
        }
        assert_eq!(infelicity_rate(&aggs, 0.8).unwrap(), 0.03);
        aggs.push(aggregate(&item(Pronoun::Someone, &[Other; 5]), 0.8).unwrap());
        assert_eq!(infelicity_rate(&aggs, 0.8).unwrap(), 0.03);
    }

    #[test]
    fn kappa_hand_example() {
        // 10 items, two annotators, labels Y/N.
        // a: Y Y Y Y Y Y Y N N N
        // b: Y Y Y Y Y N N N N Y
        // agreement: 5 (first five Y) + 2 (items 8,9 N) = 7 -> p_o = 0.7
        // marginals a: Y .7 N .3 ; b: Y .6 N .4 -> p_e = .42 + .12 = .54
        // kappa = (.7 - .54) / .46 = 0.347826...
        let a = "YYYYYYYNNN".chars().collect::<Vec<_>>();
        let b = "YYYYYNNNNY".chars().collect::<Vec<_>>();
        let k = pairwise_kappa(&a, &b).unwrap().unwrap();
        assert!((k - 0.16 / 0.46).abs() < 1e-12, "{k}");
    }

    #[test]
    fn kappa_degenerate() {
        let a = vec![1, 1, 1];
        assert_eq!(pairwise_kappa(&a, &a).unwrap(), Some(1.0));
        assert_eq!(pairwise_kappa(&[1, 2, 3], &[1, 2, 3]).unwrap(), Some(1.0));
        // p_e = 0 when marginals are disjoint
        assert_eq!(pairwise_kappa(&[1, 1], &[2, 2]).unwrap(), Some(0.0));
        assert!(pairwise_kappa(&[1], &[1, 2]).is_err());
        assert!(mean_kappa(&[vec![1]]).is_err());
        let m = mean_kappa(&[vec![1, 2, 1], vec![1, 2, 1], vec![1, 2, 1]]).unwrap();
        assert_eq!(m, Some(1.0));
    }

    #[test]
    fn parse_annotation_file() {
        let items = parse_annotations("sentence_id,original,c1,c2,c3,c4,c5\ns1,something,A,A,A,A,S\n").unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].choices, vec![AnyForm, AnyForm, AnyForm, AnyForm, SomeForm]);
        assert!(matches!(parse_annotations("s1,something,A,A"), Err(AnnotationError::Parse { line: 1, .. })));
        assert!(matches!(parse_annotations("s1,nobody,A,A,A,A,A"), Err(AnnotationError::Parse { line: 1, .. })));
        assert!(matches!(parse_annotations("s1,anyone,A,A,A,A,X"), Err(AnnotationError::Parse { line: 1, .. })));
    }

    #[test]
    fn idiom_matching_covers_target() {
        let list = IdiomStoplist::default();
        let r = &SentenceRecord::from_text("a", "Go get a drink or something.", Population::Native)[0];
        assert!(list.matches(r));
        let r = &SentenceRecord::from_text("b", "He was anything but calm.", Population::Native)[0];
        assert!(list.matches(r));
        let r = &SentenceRecord::from_text("c", "I saw something.", Population::Native)[0];
        assert!(!list.matches(r));
        // pattern elsewhere in the sentence does not flag the other pronoun
        let recs = SentenceRecord::from_text("d", "Someone said or something.", Population::Native);
        assert!(!list.matches(&recs[0]));
        assert!(list.matches(&recs[1]));
        assert_eq!(IdiomStoplist::parse("# c\n\nanything but\n"), IdiomStoplist::new(["anything but"]));
    }
}
