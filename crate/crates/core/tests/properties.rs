use std::collections::BTreeMap;

use proptest::prelude::*;

use indefinite::analysis::{infelicity_by_class, DetectionOutcome, DetectionReport, Confusion, Felicity};
use indefinite::annotation::{aggregate, pairwise_kappa, AnnotationItem, Choice, Gold};
use indefinite::classifier::{CoarseClass, RuleConfig};
use indefinite::corpus::{locate_ips, read_corpus, tokenize, write_corpus, Corpus, Population, Pronoun, SentenceRecord};
use indefinite::lm::{NgramConfig, NgramModel};
use indefinite::typology::{mds_project, symmetric_eigen};

const WORDS: &[&str] = &["i", "did", "n't", "see", "if", "than", "more", "you", "never", "the", "cat", "how", "?", ".", ","];

fn pronoun() -> impl Strategy<Value = Pronoun> {
    prop::sample::select(Pronoun::ALL.to_vec())
}

fn population() -> impl Strategy<Value = Population> {
    prop::sample::select(Population::ALL.to_vec())
}

/// `(text, ip_index)` with exactly one target pronoun in lower, Title or UPPER case.
fn sentence() -> impl Strategy<Value = (Vec<String>, usize)> {
    (
        prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..6),
        prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..6),
        pronoun(),
        0..3u8,
    )
        .prop_map(|(left, right, p, case)| {
            let ip = match case {
                0 => p.lemma().to_string(),
                1 => {
                    let mut s = p.lemma().to_string();
                    s[..1].make_ascii_uppercase();
                    s
                }
                _ => p.lemma().to_uppercase(),
            };
            let mut tokens: Vec<String> = left.iter().map(|s| s.to_string()).collect();
            let idx = tokens.len();
            tokens.push(ip);
            tokens.extend(right.iter().map(|s| s.to_string()));
            (tokens, idx)
        })
}

fn record(i: usize, (tokens, idx): (Vec<String>, usize), population: Population) -> SentenceRecord {
    let text = tokens.join(" ");
    let original = Pronoun::from_token(&tokens[idx]).unwrap();
    let mut r = SentenceRecord::new(format!("r{i}"), &text, idx, population).unwrap();
    assert_eq!(r.original, original);
    r.extra.insert("source".into(), serde_json::json!({"batch": i % 3}));
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_round_trip(sents in prop::collection::vec((sentence(), population()), 1..100)) {
        let records: Vec<_> = sents.into_iter().enumerate().map(|(i, (s, p))| record(i, s, p)).collect();
        let corpus = Corpus::new(records).unwrap();
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let back = read_corpus(&buf[..]).unwrap();
        prop_assert_eq!(back.records, corpus.records);
    }

    #[test]
    fn substitution_is_an_involution((tokens, idx) in sentence()) {
        let r = SentenceRecord::new("x", tokens.join(" "), idx, Population::Native).unwrap();
        let once = r.substituted().unwrap();
        prop_assert_eq!(once.original, r.original.alternate());
        prop_assert_eq!(once.tokens.len(), r.tokens.len());
        let twice = once.substituted().unwrap();
        prop_assert_eq!(twice.tokens, r.tokens);
    }

    #[test]
    fn located_pronouns_are_in_bounds(text in "[a-zA-Z' ?.,]{0,60}", extra in prop::collection::vec(pronoun(), 0..3)) {
        let mut text = text;
        for p in extra {
            text.push(' ');
            text.push_str(p.lemma());
        }
        let tokens = tokenize(&text);
        for (i, p) in locate_ips(&tokens) {
            prop_assert!(i < tokens.len());
            prop_assert_eq!(Pronoun::from_token(&tokens[i]), Some(p));
        }
    }

    #[test]
    fn classification_ignores_record_order(
        sents in prop::collection::vec(sentence(), 1..40),
        seed in any::<u64>(),
    ) {
        let rules = RuleConfig::default().compile().unwrap();
        let records: Vec<_> = sents.into_iter().enumerate().map(|(i, s)| record(i, s, Population::Learner)).collect();
        let forward: BTreeMap<String, CoarseClass> = records.iter().map(|r| (r.id.clone(), rules.classify(r))).collect();
        let mut shuffled = records.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        let again: BTreeMap<String, CoarseClass> = shuffled.iter().map(|r| (r.id.clone(), rules.classify(r))).collect();
        prop_assert_eq!(forward, again);
    }

    #[test]
    fn raising_the_threshold_only_removes_items(
        choices in prop::collection::vec(prop::sample::select(vec![Choice::SomeForm, Choice::AnyForm, Choice::Other]), 5),
        original in pronoun(),
        t1 in 0.51f64..=1.0,
        t2 in 0.51f64..=1.0,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let item = AnnotationItem { sentence_id: "x".into(), original, choices };
        let at_lo = aggregate(&item, lo).unwrap();
        let at_hi = aggregate(&item, hi).unwrap();
        prop_assert_eq!(at_lo.gold_at(hi), at_hi.gold);
        if at_hi.gold != Gold::LowConfidence {
            prop_assert_eq!(at_lo.gold, at_hi.gold);
        }
    }

    #[test]
    fn kappa_is_symmetric_and_bounded(
        pairs in prop::collection::vec((0..3u8, 0..3u8), 1..60),
    ) {
        let a: Vec<u8> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        let ab = pairwise_kappa(&a, &b).unwrap();
        let ba = pairwise_kappa(&b, &a).unwrap();
        prop_assert_eq!(ab.is_some(), ba.is_some());
        if let (Some(x), Some(y)) = (ab, ba) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!(x <= 1.0 + 1e-12);
        }
        prop_assert_eq!(pairwise_kappa(&a, &a).unwrap(), Some(1.0));
    }

    #[test]
    fn scaling_scores_keeps_the_choice(so in -100.0f64..0.0, sa in -100.0f64..0.0, c in 0.01f64..100.0) {
        let a = DetectionOutcome::from_scores("x", Pronoun::Anyone, so, sa);
        let b = DetectionOutcome::from_scores("x", Pronoun::Anyone, so * c, sa * c);
        prop_assert_eq!(a.model_choice, b.model_choice);
    }

    #[test]
    fn report_identities(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
        prop_assume!(tp + fp + fn_ + tn > 0);
        let r = DetectionReport::from_confusion(Confusion { tp, fp, fn_, tn }, 0.8).unwrap();
        prop_assert_eq!(r.accuracy, (tp + tn) as f64 / r.n as f64);
        for s in [r.infelicitous, r.felicitous] {
            if let (Some(p), Some(rc), Some(f)) = (s.precision, s.recall, s.f1) {
                let h = if p + rc > 0.0 { 2.0 * p * rc / (p + rc) } else { 0.0 };
                prop_assert_eq!(f, h);
            }
        }
    }

    #[test]
    fn class_rates_weight_to_the_overall_rate(
        items in prop::collection::vec((prop::sample::select(CoarseClass::ALL.to_vec()), any::<bool>()), 1..200),
    ) {
        let table = infelicity_by_class(items.iter().map(|&(c, bad)| {
            (c, if bad { Felicity::Infelicitous } else { Felicity::Felicitous })
        }));
        let overall = table.overall();
        let weighted: f64 = table.rows.values().map(|t| t.percent().unwrap() * t.annotated as f64).sum::<f64>()
            / overall.annotated as f64;
        prop_assert!((weighted - overall.percent().unwrap()).abs() < 1e-9);
        prop_assert_eq!(overall.annotated, items.len());
    }

    #[test]
    fn next_token_distribution_sums_to_one(
        history in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "zzz", "<s>", "</s>"]), 0..4),
        order in 1usize..5,
    ) {
        let corpus: Vec<Vec<&str>> = vec![vec!["a", "b", "c"], vec!["b", "b"], vec!["c", "a"], vec!["a"]];
        let m = NgramModel::train(&corpus, NgramConfig::with_order(order)).unwrap();
        let total: f64 = m.vocab().iter().map(|w| m.next_prob(&history, w)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "sum {}", total);
    }

    #[test]
    fn planar_points_round_trip(points in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..=8)) {
        let n = points.len();
        let dist = |i: usize, j: usize| ((points[i].0 - points[j].0).powi(2) + (points[i].1 - points[j].1).powi(2)).sqrt();
        let d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dist(i, j)).collect()).collect();
        let p = mds_project(&d, 2).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((p.distance(i, j) - d[i][j]).abs() < 1e-9);
            }
        }
        for k in 0..2 {
            let mean: f64 = p.coords.iter().map(|c| c[k]).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn jacobi_reconstructs_symmetric_matrices(vals in prop::collection::vec(-5.0f64..5.0, 36)) {
        let n = 6;
        let a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| vals[i.min(j) * n + i.max(j)]).collect()).collect();
        let (w, v) = symmetric_eigen(&a);
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|k| v[i][k] * w[k] * v[j][k]).sum();
                prop_assert!((r - a[i][j]).abs() < 1e-9);
            }
        }
        prop_assert!(w.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn recovered_spread_is_bounded_by_the_spectrum(
        vals in prop::collection::vec(0.0f64..3.0, 28),
        n in 3usize..=8,
        dims in 1usize..=3,
    ) {
        let mut d = vec![vec![0.0; n]; n];
        let mut it = vals.iter();
        for i in 0..n {
            for j in i + 1..n {
                let x = *it.next().unwrap();
                d[i][j] = x;
                d[j][i] = x;
            }
        }
        let p = mds_project(&d, dims).unwrap();
        let recovered: f64 = p.pairwise_distances().iter().map(|x| x * x).sum();
        let bound: f64 = n as f64 * p.eigenvalues.iter().filter(|&&l| l > 0.0).sum::<f64>();
        prop_assert!(recovered <= bound + 1e-9);
    }
}
