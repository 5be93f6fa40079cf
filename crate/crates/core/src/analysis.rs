//! Score-comparison infelicity detection and the statistics built on it.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnnotationAggregate, Gold, ANNOTATORS};
use crate::classifier::{ratio, CoarseClass, Rules};
use crate::corpus::{CorpusError, Family, Population, Pronoun, SentenceRecord};
use crate::lm::{ScoreError, Scorer};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("sentence `{id}`: {source}")]
    Score {
        id: String,
        #[source]
        source: ScoreError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no items left after confidence filtering")]
    NoItems,
    #[error("outcome `{outcome}` paired with annotation `{annotation}`")]
    Misaligned { outcome: String, annotation: String },
    #[error("sample sizes must be positive and counts within them (k1={k1}, n1={n1}, k2={k2}, n2={n2})")]
    BadProportion { k1: u64, n1: u64, k2: u64, n2: u64 },
    #[error("scorer returned {got} scores for {expected} sentences")]
    ScoreCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Felicity {
    Felicitous,
    Infelicitous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub sentence_id: String,
    pub original: Pronoun,
    pub model_choice: Pronoun,
    pub score_original: f64,
    pub score_alternative: f64,
    pub predicted: Felicity,
}

impl DetectionOutcome {
    /// Picks the higher-scoring pronoun; ties keep the original.
    pub fn from_scores(sentence_id: &str, original: Pronoun, score_original: f64, score_alternative: f64) -> Self {
        let model_choice = if score_alternative > score_original { original.alternate() } else { original };
        DetectionOutcome {
            sentence_id: sentence_id.to_string(),
            original,
            model_choice,
            score_original,
            score_alternative,
            predicted: if model_choice == original { Felicity::Felicitous } else { Felicity::Infelicitous },
        }
    }
}

/// Scores the sentence as written and with the pronoun swapped.
pub fn detect<S: Scorer + ?Sized>(record: &SentenceRecord, scorer: &S) -> Result<DetectionOutcome, AnalysisError> {
    let alternative = record.substitute()?;
    let scores = scorer
        .score_batch(&[record.tokens.clone(), alternative])
        .map_err(|source| AnalysisError::Score { id: record.id.clone(), source })?;
    if scores.len() != 2 {
        return Err(AnalysisError::ScoreCount { expected: 2, got: scores.len() });
    }
    Ok(DetectionOutcome::from_scores(&record.id, record.original, scores[0], scores[1]))
}

/// Batch version of [`detect`]: every sentence pair goes to the scorer in a
/// single call so remote backends can batch. Output order follows input.
pub fn detect_all<S: Scorer + ?Sized>(records: &[SentenceRecord], scorer: &S) -> Result<Vec<DetectionOutcome>, AnalysisError> {
    let pairs: Vec<Vec<String>> = records
        .par_iter()
        .map(|r| Ok([r.tokens.clone(), r.substitute()?]))
        .collect::<Result<Vec<_>, CorpusError>>()?
        .into_iter()
        .flatten()
        .collect();
    let scores = scorer.score_batch(&pairs).map_err(|source| AnalysisError::Score {
        id: format!("batch of {} starting at `{}`", records.len(), records.first().map_or("", |r| r.id.as_str())),
        source,
    })?;
    if scores.len() != pairs.len() {
        return Err(AnalysisError::ScoreCount { expected: pairs.len(), got: scores.len() });
    }
    Ok(records
        .iter()
        .zip(scores.chunks(2))
        .map(|(r, s)| DetectionOutcome::from_scores(&r.id, r.original, s[0], s[1]))
        .collect())
}

/// Which annotation confidence levels enter an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConfidenceFilter {
    AtLeast(f64),
    Unanimous,
}

impl ConfidenceFilter {
    pub fn threshold(self) -> f64 {
        match self {
            ConfidenceFilter::AtLeast(t) => t,
            ConfidenceFilter::Unanimous => 1.0,
        }
    }

    pub fn from_threshold(t: f64) -> Self {
        if t >= 1.0 {
            ConfidenceFilter::Unanimous
        } else {
            ConfidenceFilter::AtLeast(t)
        }
    }
}

/// Binary confusion counts with INFELICITOUS as the positive label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: Felicity, gold: Felicity) {
        match (predicted, gold) {
            (Felicity::Infelicitous, Felicity::Infelicitous) => self.tp += 1,
            (Felicity::Infelicitous, Felicity::Felicitous) => self.fp += 1,
            (Felicity::Felicitous, Felicity::Infelicitous) => self.fn_ += 1,
            (Felicity::Felicitous, Felicity::Felicitous) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts combine associatively, so reports can be reduced in any order.
    pub fn merge(self, other: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl LabelScores {
    fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        LabelScores { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub infelicitous: LabelScores,
    pub felicitous: LabelScores,
    pub accuracy: f64,
    pub baseline_accuracy: f64,
    pub n: usize,
    pub threshold: f64,
    pub confusion: Confusion,
}

impl DetectionReport {
    pub fn from_confusion(confusion: Confusion, threshold: f64) -> Result<DetectionReport, AnalysisError> {
        let n = confusion.total();
        if n == 0 {
            return Err(AnalysisError::NoItems);
        }
        let Confusion { tp, fp, fn_, tn } = confusion;
        let gold_infelicitous = tp + fn_;
        let gold_felicitous = fp + tn;
        Ok(DetectionReport {
            infelicitous: LabelScores::new(tp, fp, fn_),
            felicitous: LabelScores::new(tn, fn_, fp),
            accuracy: (tp + tn) as f64 / n as f64,
            baseline_accuracy: gold_infelicitous.max(gold_felicitous) as f64 / n as f64,
            n,
            threshold,
            confusion,
        })
    }
}

/// Scores outcomes against annotation gold.
///
/// Items below the confidence filter, ties and "other" majorities are
/// dropped before counting.
pub fn detection_report(
    items: &[(DetectionOutcome, AnnotationAggregate)],
    filter: ConfidenceFilter,
) -> Result<DetectionReport, AnalysisError> {
    let threshold = filter.threshold();
    let mut confusion = Confusion::default();
    for (outcome, agg) in items {
        if outcome.sentence_id != agg.sentence_id || outcome.original != agg.original {
            return Err(AnalysisError::Misaligned {
                outcome: outcome.sentence_id.clone(),
                annotation: agg.sentence_id.clone(),
            });
        }
        if let Some(gold) = felicity_of(agg.gold_at(threshold)) {
            confusion.add(outcome.predicted, gold);
        }
    }
    DetectionReport::from_confusion(confusion, threshold)
}

pub fn felicity_of(gold: Gold) -> Option<Felicity> {
    match gold {
        Gold::Felicitous => Some(Felicity::Felicitous),
        Gold::Infelicitous => Some(Felicity::Infelicitous),
        Gold::LowConfidence | Gold::OtherMajority => None,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub annotated: usize,
    pub infelicitous: usize,
}

impl ClassTally {
    pub fn percent(&self) -> Option<f64> {
        ratio(self.infelicitous, self.annotated).map(|r| 100.0 * r)
    }
}

/// Per-class infelicity counts. Classes with no items are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassInfelicity {
    pub rows: BTreeMap<CoarseClass, ClassTally>,
}

impl ClassInfelicity {
    pub fn get(&self, class: CoarseClass) -> Option<&ClassTally> {
        self.rows.get(&class)
    }

    pub fn overall(&self) -> ClassTally {
        self.rows.values().fold(ClassTally::default(), |acc, t| ClassTally {
            annotated: acc.annotated + t.annotated,
            infelicitous: acc.infelicitous + t.infelicitous,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,annotated,infelicitous,percent\n");
        for (class, t) in &self.rows {
            let pct = t.percent().map(|p| format!("{p:.1}")).unwrap_or_default();
            out.push_str(&format!("{class},{},{},{pct}\n", t.annotated, t.infelicitous));
        }
        out
    }
}

/// Tallies `(class, label)` pairs. Works for gold labels and for model
/// predictions alike.
pub fn infelicity_by_class(items: impl IntoIterator<Item = (CoarseClass, Felicity)>) -> ClassInfelicity {
    let mut rows: BTreeMap<CoarseClass, ClassTally> = BTreeMap::new();
    for (class, label) in items {
        let t = rows.entry(class).or_default();
        t.annotated += 1;
        if label == Felicity::Infelicitous {
            t.infelicitous += 1;
        }
    }
    ClassInfelicity { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Marker {
    /// two-sided p < .001
    Significant,
    NotSignificant,
    /// zero pooled variance with differing proportions
    Degenerate,
}

impl Marker {
    pub fn as_str(self) -> &'static str {
        match self {
            Marker::Significant => "***",
            Marker::NotSignificant => "ns",
            Marker::Degenerate => "degenerate",
        }
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    pub p_value: f64,
    pub marker: Marker,
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.001;

/// Complementary error function, Abramowitz & Stegun 7.1.26 (|error| < 1.5e-7).
pub fn erfc(x: f64) -> f64 {
    const P: f64 = 0.327_591_1;
    const A: [f64; 5] = [0.254_829_592, -0.284_496_736, 1.421_413_741, -1.453_152_027, 1.061_405_429];
    let ax = x.abs();
    let t = 1.0 / (1.0 + P * ax);
    let poly = t * (A[0] + t * (A[1] + t * (A[2] + t * (A[3] + t * A[4]))));
    let tail = poly * (-ax * ax).exp();
    if x >= 0.0 {
        tail
    } else {
        2.0 - tail
    }
}

/// Pooled two-proportion z-test of `k1/n1` against `k2/n2`.
pub fn two_proportion_test(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ZTest, AnalysisError> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(AnalysisError::BadProportion { k1, n1, k2, n2 });
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let p1 = k1 as f64 / n1f;
    let p2 = k2 as f64 / n2f;
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    let variance = pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f);
    if variance <= 0.0 {
        // both samples sit at 0 or 1
        let marker = if p1 == p2 { Marker::NotSignificant } else { Marker::Degenerate };
        return Ok(ZTest { z: 0.0, p_value: 1.0, marker });
    }
    let z = (p1 - p2) / variance.sqrt();
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    let marker = if p_value < SIGNIFICANCE_LEVEL { Marker::Significant } else { Marker::NotSignificant };
    Ok(ZTest { z, p_value, marker })
}

/// A `total` column or one usage class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShareGroup {
    Total,
    Class(CoarseClass),
}

impl fmt::Display for ShareGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShareGroup::Total => f.write_str("total"),
            ShareGroup::Class(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyCounts {
    pub some: u64,
    pub any: u64,
}

impl FamilyCounts {
    pub fn total(&self) -> u64 {
        self.some + self.any
    }

    pub fn some_share(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| self.some as f64 / n as f64)
    }

    pub fn any_share(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| self.any as f64 / n as f64)
    }
}

/// some-/any- usage by group and population, with each non-native
/// population tested against natives.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassDistribution {
    pub cells: BTreeMap<(ShareGroup, Population), FamilyCounts>,
    pub versus_native: BTreeMap<(ShareGroup, Population), ZTest>,
}

impl ClassDistribution {
    pub fn cell(&self, group: ShareGroup, population: Population) -> FamilyCounts {
        self.cells.get(&(group, population)).copied().unwrap_or_default()
    }

    pub fn to_csv(&self, by_class: bool) -> String {
        let mut out = String::from("group,population,some,any,some_share,any_share,z_vs_native,marker_vs_native\n");
        for ((group, pop), c) in &self.cells {
            if !by_class && *group != ShareGroup::Total {
                continue;
            }
            let share = |s: Option<f64>| s.map(|x| format!("{x:.6}")).unwrap_or_default();
            let (z, m) = match self.versus_native.get(&(*group, *pop)) {
                Some(t) => (format!("{:.6}", t.z), t.marker.to_string()),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{group},{pop},{},{},{},{},{z},{m}\n",
                c.some,
                c.any,
                share(c.some_share()),
                share(c.any_share())
            ));
        }
        out
    }
}

/// Counts some-/any- occurrences per class and population. `class_of`
/// supplies the usage class; use [`classify_with`] for the rule classifier.
pub fn usage_shares<'a>(
    records: impl IntoIterator<Item = &'a SentenceRecord>,
    class_of: impl Fn(&SentenceRecord) -> CoarseClass,
) -> ClassDistribution {
    let mut cells: BTreeMap<(ShareGroup, Population), FamilyCounts> = BTreeMap::new();
    for r in records {
        let class = class_of(r);
        for group in [ShareGroup::Total, ShareGroup::Class(class)] {
            let c = cells.entry((group, r.population)).or_default();
            match r.original.family() {
                Family::Some => c.some += 1,
                Family::Any => c.any += 1,
            }
        }
    }
    let mut versus_native = BTreeMap::new();
    for (&(group, pop), c) in &cells {
        if pop == Population::Native {
            continue;
        }
        let Some(native) = cells.get(&(group, Population::Native)) else { continue };
        if let Ok(t) = two_proportion_test(native.some, native.total(), c.some, c.total()) {
            versus_native.insert((group, pop), t);
        }
    }
    ClassDistribution { cells, versus_native }
}

pub fn classify_with(rules: &Rules) -> impl Fn(&SentenceRecord) -> CoarseClass + '_ {
    move |r| rules.classify(r)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub items: usize,
    pub mismatched: usize,
}

impl Stratum {
    pub fn rate(&self) -> Option<f64> {
        ratio(self.mismatched, self.items)
    }
}

/// How often writers used the other family than the one annotators preferred.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionalConfusion {
    /// Majority preferred some-; `mismatched` counts any- originals.
    pub some_preferred: Stratum,
    /// Majority preferred any-; `mismatched` counts some- originals.
    pub any_preferred: Stratum,
}

/// Only confident (non-tied, non-"other") items at `threshold` count.
pub fn confusion_direction(aggregates: &[AnnotationAggregate], threshold: f64) -> DirectionalConfusion {
    let mut out = DirectionalConfusion::default();
    for a in aggregates {
        if felicity_of(a.gold_at(threshold)).is_none() {
            continue;
        }
        let Some(preferred) = a.majority.family() else { continue };
        let stratum = match preferred {
            Family::Some => &mut out.some_preferred,
            Family::Any => &mut out.any_preferred,
        };
        stratum.items += 1;
        if a.original.family() != preferred {
            stratum.mismatched += 1;
        }
    }
    out
}

/// Minimum vote count for a confidence threshold.
pub fn votes_needed(threshold: f64) -> u8 {
    (threshold * ANNOTATORS as f64 - 1e-9).ceil() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_and_ties() {
        let o = DetectionOutcome::from_scores("a", Pronoun::Something, -10.0, -12.0);
        assert_eq!((o.model_choice, o.predicted), (Pronoun::Something, Felicity::Felicitous));
        let o = DetectionOutcome::from_scores("a", Pronoun::Something, -12.0, -10.0);
        assert_eq!((o.model_choice, o.predicted), (Pronoun::Anything, Felicity::Infelicitous));
        let o = DetectionOutcome::from_scores("a", Pronoun::Anyone, -7.5, -7.5);
        assert_eq!((o.model_choice, o.predicted), (Pronoun::Anyone, Felicity::Felicitous));
    }

    #[test]
    fn hand_confusion() {
        let c = Confusion { tp: 10, fp: 5, fn_: 2, tn: 83 };
        let r = DetectionReport::from_confusion(c, 0.8).unwrap();
        let p = 10.0 / 15.0;
        let rc = 10.0 / 12.0;
        assert_eq!(r.infelicitous.precision, Some(p));
        assert_eq!(r.infelicitous.recall, Some(rc));
        assert_eq!(r.infelicitous.f1, Some(2.0 * p * rc / (p + rc)));
        assert_eq!(format!("{:.3}", r.infelicitous.precision.unwrap()), "0.667");
        assert_eq!(format!("{:.3}", r.infelicitous.recall.unwrap()), "0.833");
        assert_eq!(format!("{:.3}", r.infelicitous.f1.unwrap()), "0.741");
        assert_eq!(r.accuracy, 0.93);
        assert_eq!(r.baseline_accuracy, 0.88);
        assert_eq!(r.felicitous.precision, Some(83.0 / 85.0));
        assert_eq!(r.felicitous.recall, Some(83.0 / 88.0));
    }

    #[test]
    fn empty_report_is_an_error() {
        assert!(matches!(DetectionReport::from_confusion(Confusion::default(), 0.8), Err(AnalysisError::NoItems)));
    }

    #[test]
    fn erfc_known_values() {
        // reference values of erfc
        let table = [
            (0.0, 1.0),
            (0.5, 0.479_500_122_186_953_5),
            (1.0, 0.157_299_207_050_285_1),
            (2.0, 0.004_677_734_981_047_266),
            (3.0, 2.209_049_699_858_544e-5),
            (-1.0, 1.842_700_792_949_715),
        ];
        for (x, want) in table {
            assert!((erfc(x) - want).abs() < 1.5e-7, "erfc({x})");
        }
    }

    #[test]
    fn z_test_cases() {
        let t = two_proportion_test(30, 100, 30, 100).unwrap();
        assert_eq!(t.z, 0.0);
        assert_eq!(t.marker, Marker::NotSignificant);
        let t = two_proportion_test(0, 10, 0, 20).unwrap();
        assert_eq!(t.marker, Marker::NotSignificant);
        assert!(two_proportion_test(1, 0, 1, 2).is_err());
        assert!(two_proportion_test(3, 2, 1, 2).is_err());
        let t = two_proportion_test(600, 1000, 500, 1000).unwrap();
        assert_eq!(t.marker, Marker::Significant);
        assert!(t.z > 4.49 && t.z < 4.5);
        let t = two_proportion_test(52, 100, 50, 100).unwrap();
        assert_eq!(t.marker, Marker::NotSignificant);
    }

    #[test]
    fn class_percentage_anchor() {
        let items = (0..587).map(|i| (CoarseClass::QU, if i < 141 { Felicity::Infelicitous } else { Felicity::Felicitous }));
        let t = infelicity_by_class(items);
        assert_eq!(format!("{:.1}", t.get(CoarseClass::QU).unwrap().percent().unwrap()), "24.0");
        assert!(t.get(CoarseClass::CP).is_none());
    }

    #[test]
    fn votes_needed_grid() {
        assert_eq!(votes_needed(0.8), 4);
        assert_eq!(votes_needed(1.0), 5);
        assert_eq!(votes_needed(0.6), 3);
        assert_eq!(votes_needed(0.7), 4);
    }
}
