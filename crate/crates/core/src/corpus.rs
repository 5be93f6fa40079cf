//! Sentence records, tokenization and pronoun substitution.
//!
//! A corpus file is UTF-8 JSON lines. Each line is an object with the
//! fields `id`, `text`, `ip_index`, `original` and `population`; any other
//! field is kept verbatim in [`SentenceRecord::extra`] and written back on
//! save.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate record id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("record `{id}`: {message}")]
    Invalid { id: String, message: String },
    #[error("unknown pronoun `{0}`")]
    UnknownPronoun(String),
    #[error("unknown population `{0}`")]
    UnknownPopulation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The some-/any- split of the four target pronouns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Some,
    Any,
}

impl Family {
    pub fn other(self) -> Family {
        match self {
            Family::Some => Family::Any,
            Family::Any => Family::Some,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Some => "some",
            Family::Any => "any",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pronoun {
    Someone,
    Anyone,
    Something,
    Anything,
}

impl Pronoun {
    pub const ALL: [Pronoun; 4] = [
        Pronoun::Someone,
        Pronoun::Anyone,
        Pronoun::Something,
        Pronoun::Anything,
    ];

    pub fn lemma(self) -> &'static str {
        match self {
            Pronoun::Someone => "someone",
            Pronoun::Anyone => "anyone",
            Pronoun::Something => "something",
            Pronoun::Anything => "anything",
        }
    }

    /// Matches a token case-insensitively. `somebody`/`anybody` are not targets.
    pub fn from_token(token: &str) -> Option<Pronoun> {
        Pronoun::ALL
            .into_iter()
            .find(|p| token.eq_ignore_ascii_case(p.lemma()))
    }

    pub fn alternate(self) -> Pronoun {
        match self {
            Pronoun::Someone => Pronoun::Anyone,
            Pronoun::Anyone => Pronoun::Someone,
            Pronoun::Something => Pronoun::Anything,
            Pronoun::Anything => Pronoun::Something,
        }
    }

    pub fn family(self) -> Family {
        match self {
            Pronoun::Someone | Pronoun::Something => Family::Some,
            Pronoun::Anyone | Pronoun::Anything => Family::Any,
        }
    }

    /// The pronoun of `family` referring to the same kind (person/thing).
    pub fn in_family(self, family: Family) -> Pronoun {
        if self.family() == family {
            self
        } else {
            self.alternate()
        }
    }
}

impl fmt::Display for Pronoun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.lemma())
    }
}

impl FromStr for Pronoun {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pronoun::from_token(s).ok_or_else(|| CorpusError::UnknownPronoun(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Native,
    AdvancedL2,
    Learner,
}

impl Population {
    pub const ALL: [Population; 3] = [Population::Native, Population::AdvancedL2, Population::Learner];

    pub fn as_str(self) -> &'static str {
        match self {
            Population::Native => "native",
            Population::AdvancedL2 => "advanced_l2",
            Population::Learner => "learner",
        }
    }
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Population {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "native" => Ok(Population::Native),
            "advanced_l2" | "advl2" | "advanced" => Ok(Population::AdvancedL2),
            "learner" | "learners" => Ok(Population::Learner),
            _ => Err(CorpusError::UnknownPopulation(s.to_string())),
        }
    }
}

const SPLIT_PUNCT: [char; 6] = ['.', '?', '!', ',', ';', ':'];

/// Whitespace tokenizer that also splits trailing punctuation and the `n't` clitic.
///
/// Each trailing punctuation character becomes its own token, so `"thanks..."`
/// yields `["thanks", ".", ".", "."]`. Casing is preserved.
pub fn tokenize(raw_text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in raw_text.split_whitespace() {
        let stem = word.trim_end_matches(SPLIT_PUNCT);
        let trailing = &word[stem.len()..];
        if !stem.is_empty() {
            push_with_clitic(stem, &mut tokens);
        }
        tokens.extend(trailing.chars().map(String::from));
    }
    tokens
}

fn push_with_clitic(word: &str, out: &mut Vec<String>) {
    let lower = word.to_lowercase();
    if lower.len() > 3 && lower.ends_with("n't") {
        let cut = word.len() - 3;
        out.push(word[..cut].to_string());
        out.push(word[cut..].to_string());
    } else {
        out.push(word.to_string());
    }
}

/// All target-pronoun occurrences, in token order.
pub fn locate_ips<S: AsRef<str>>(tokens: &[S]) -> Vec<(usize, Pronoun)> {
    tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| Pronoun::from_token(t.as_ref()).map(|p| (i, p)))
        .collect()
}

/// Renders `target` with the capitalization pattern of `model`.
///
/// All-caps tokens stay all-caps; otherwise only the initial-uppercase flag
/// is copied.
pub fn match_case(model: &str, target: &str) -> String {
    let has_letters = model.chars().any(char::is_alphabetic);
    if has_letters && model.chars().filter(|c| c.is_alphabetic()).all(char::is_uppercase) && model.chars().count() > 1 {
        return target.to_uppercase();
    }
    if model.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = target.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    } else {
        target.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub ip_index: usize,
    pub original: Pronoun,
    pub population: Population,
    pub raw_text: String,
    /// Unrecognized fields from the source line.
    pub extra: BTreeMap<String, Value>,
}

impl SentenceRecord {
    /// Builds a record from raw text, tokenizing it and checking the invariants.
    pub fn new(
        id: impl Into<String>,
        raw_text: impl Into<String>,
        ip_index: usize,
        population: Population,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let raw_text = raw_text.into();
        let tokens = tokenize(&raw_text);
        let original = tokens
            .get(ip_index)
            .and_then(|t| Pronoun::from_token(t))
            .ok_or_else(|| CorpusError::Invalid {
                id: id.clone(),
                message: format!("token {ip_index} is not a target pronoun"),
            })?;
        Ok(SentenceRecord {
            id,
            tokens,
            ip_index,
            original,
            population,
            raw_text,
            extra: BTreeMap::new(),
        })
    }

    /// One record per pronoun occurrence; ids are `{id_prefix}` with a `-k` suffix
    /// when the sentence holds more than one occurrence.
    pub fn from_text(id_prefix: &str, raw_text: &str, population: Population) -> Vec<SentenceRecord> {
        let tokens = tokenize(raw_text);
        let hits = locate_ips(&tokens);
        let multi = hits.len() > 1;
        hits.into_iter()
            .enumerate()
            .map(|(k, (ip_index, original))| SentenceRecord {
                id: if multi { format!("{id_prefix}-{k}") } else { id_prefix.to_string() },
                tokens: tokens.clone(),
                ip_index,
                original,
                population,
                raw_text: raw_text.to_string(),
                extra: BTreeMap::new(),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |message: String| CorpusError::Invalid { id: self.id.clone(), message };
        let token = self.tokens.get(self.ip_index).ok_or_else(|| {
            invalid(format!("ip_index {} out of bounds for {} tokens", self.ip_index, self.tokens.len()))
        })?;
        if token.to_lowercase() != self.original.lemma() {
            return Err(invalid(format!(
                "token `{token}` at ip_index {} does not match original `{}`",
                self.ip_index, self.original
            )));
        }
        Ok(())
    }

    /// Tokens with the target pronoun swapped for its some-/any- alternative.
    pub fn substitute(&self) -> Result<Vec<String>, CorpusError> {
        self.validate()?;
        let mut out = self.tokens.clone();
        let slot = &mut out[self.ip_index];
        *slot = match_case(slot, self.original.alternate().lemma());
        Ok(out)
    }

    /// The record with its target pronoun swapped; `original` follows the swap.
    pub fn substituted(&self) -> Result<SentenceRecord, CorpusError> {
        let tokens = self.substitute()?;
        let raw_text = tokens.join(" ");
        Ok(SentenceRecord {
            tokens,
            original: self.original.alternate(),
            raw_text,
            ..self.clone()
        })
    }

    pub fn extra_str(&self, key: &str) -> Option<&str> {
        self.extra.get(key).and_then(Value::as_str)
    }

    pub fn to_json(&self) -> Map<String, Value> {
        let mut obj = Map::new();
        for (k, v) in &self.extra {
            obj.insert(k.clone(), v.clone());
        }
        obj.insert("id".into(), Value::from(self.id.as_str()));
        obj.insert("text".into(), Value::from(self.raw_text.as_str()));
        obj.insert("ip_index".into(), Value::from(self.ip_index));
        obj.insert("original".into(), Value::from(self.original.lemma()));
        obj.insert("population".into(), Value::from(self.population.as_str()));
        obj
    }

    pub fn to_json_line(&self) -> String {
        Value::Object(self.to_json()).to_string()
    }

    /// Parses one corpus line. `line_no` is used only for error messages.
    pub fn from_json_line(line: &str, line_no: usize) -> Result<SentenceRecord, CorpusError> {
        let parse_err = |message: String| CorpusError::Parse { line: line_no, message };
        let value: Value = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let Value::Object(obj) = value else {
            return Err(parse_err("expected a JSON object".into()));
        };
        Self::from_json(obj).map_err(|e| match e {
            CorpusError::Parse { message, .. } => parse_err(message),
            CorpusError::Invalid { id, message } => parse_err(format!("record `{id}`: {message}")),
            other => parse_err(other.to_string()),
        })
    }

    pub fn from_json(mut obj: Map<String, Value>) -> Result<SentenceRecord, CorpusError> {
        let parse_err = |message: String| CorpusError::Parse { line: 0, message };
        let mut take_str = |key: &str| -> Result<String, CorpusError> {
            match obj.remove(key) {
                Some(Value::String(s)) => Ok(s),
                Some(_) => Err(parse_err(format!("field `{key}` must be a string"))),
                None => Err(parse_err(format!("missing field `{key}`"))),
            }
        };
        let id = take_str("id")?;
        let raw_text = take_str("text")?;
        let original: Pronoun = take_str("original")?.parse()?;
        let population: Population = take_str("population")?.parse()?;
        let ip_index = match obj.remove("ip_index") {
            Some(v) => v
                .as_u64()
                .ok_or_else(|| parse_err("field `ip_index` must be a non-negative integer".into()))?
                as usize,
            None => return Err(parse_err("missing field `ip_index`".into())),
        };
        let record = SentenceRecord {
            id,
            tokens: tokenize(&raw_text),
            ip_index,
            original,
            population,
            raw_text,
            extra: obj.into_iter().collect(),
        };
        record.validate()?;
        Ok(record)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub records: Vec<SentenceRecord>,
    pub source_meta: BTreeMap<String, String>,
}

impl Corpus {
    pub fn new(records: Vec<SentenceRecord>) -> Result<Corpus, CorpusError> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId { line: i + 1, id: r.id.clone() });
            }
        }
        Ok(Corpus { records, source_meta: BTreeMap::new() })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Streams records from a JSON-lines source, one line at a time.
///
/// Blank lines are skipped. Duplicate ids are rejected as they are seen.
pub struct CorpusReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Self {
        CorpusReader { lines: reader.lines(), line_no: 0, seen: HashSet::new() }
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<SentenceRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let record = match SentenceRecord::from_json_line(&line, self.line_no) {
                Ok(r) => r,
                Err(e) => return Some(Err(e)),
            };
            if !self.seen.insert(record.id.clone()) {
                return Some(Err(CorpusError::DuplicateId { line: self.line_no, id: record.id }));
            }
            return Some(Ok(record));
        }
    }
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let records = CorpusReader::new(reader).collect::<Result<Vec<_>, _>>()?;
    Ok(Corpus { records, source_meta: BTreeMap::new() })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let mut corpus = read_corpus(BufReader::new(File::open(path)?))?;
    corpus.source_meta.insert("path".into(), path.display().to_string());
    Ok(corpus)
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut writer: W) -> Result<(), CorpusError> {
    for r in &corpus.records {
        writeln!(writer, "{}", r.to_json_line())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_corpus(corpus, BufWriter::new(File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_splits_clitic_and_punctuation() {
        assert_eq!(
            tokenize("They didn't stole something."),
            toks(&["They", "did", "n't", "stole", "something", "."])
        );
        assert_eq!(
            tokenize("Anyone know what the issue might be?"),
            toks(&["Anyone", "know", "what", "the", "issue", "might", "be", "?"])
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t ").is_empty());
    }

    #[test]
    fn tokenize_edge_cases() {
        assert_eq!(tokenize("thanks..."), toks(&["thanks", ".", ".", "."]));
        assert_eq!(tokenize("DON'T stop"), toks(&["DO", "N'T", "stop"]));
        // a bare clitic is left alone
        assert_eq!(tokenize("n't"), toks(&["n't"]));
        assert_eq!(tokenize("?"), toks(&["?"]));
        assert_eq!(tokenize("...they invite"), toks(&["...they", "invite"]));
    }

    #[test]
    fn locate_only_four_lemmas() {
        assert_eq!(locate_ips(&toks(&["Someone", "called"])), vec![(0, Pronoun::Someone)]);
        assert!(locate_ips(&toks(&["nothing", "here"])).is_empty());
        assert!(locate_ips(&toks(&["anybody", "home"])).is_empty());
        assert!(locate_ips(&toks(&["somebody", "ANYTHING"])) == vec![(1, Pronoun::Anything)]);
    }

    #[test]
    fn pronoun_alternation() {
        for p in Pronoun::ALL {
            assert_eq!(p.alternate().alternate(), p);
            assert_ne!(p.family(), p.alternate().family());
            assert_eq!(p.in_family(p.family()), p);
            assert_eq!(p.in_family(p.family().other()), p.alternate());
        }
    }

    #[test]
    fn substitute_preserves_case() {
        let r = SentenceRecord::new("a", "They didn't stole something.", 4, Population::Learner).unwrap();
        assert_eq!(r.substitute().unwrap(), toks(&["They", "did", "n't", "stole", "anything", "."]));

        let r = SentenceRecord::new("b", "Someone told me", 0, Population::Learner).unwrap();
        assert_eq!(r.substitute().unwrap(), toks(&["Anyone", "told", "me"]));

        let r = SentenceRecord::new("c", "I SAW SOMETHING", 2, Population::Native).unwrap();
        assert_eq!(r.substitute().unwrap()[2], "ANYTHING");
    }

    #[test]
    fn substitute_touches_only_target() {
        let recs = SentenceRecord::from_text("s1", "Someone said something.", Population::Native);
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].id, "s1-0");
        assert_eq!(recs[1].substitute().unwrap(), toks(&["Someone", "said", "anything", "."]));
        assert_eq!(recs[0].substitute().unwrap(), toks(&["Anyone", "said", "something", "."]));
    }

    #[test]
    fn substitute_rejects_malformed_record() {
        let mut r = SentenceRecord::new("a", "Someone told me", 0, Population::Learner).unwrap();
        r.ip_index = 1;
        assert!(matches!(r.substitute(), Err(CorpusError::Invalid { .. })));
        r.ip_index = 9;
        assert!(r.substitute().is_err());
    }

    #[test]
    fn reader_reports_line_numbers() {
        let data = concat!(
            r#"{"id":"a","text":"Someone called.","ip_index":0,"original":"someone","population":"native"}"#,
            "\n",
            r#"{"id":"b","text":"Someone called.","original":"someone","population":"native"}"#,
            "\n"
        );
        let err = read_corpus(data.as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn reader_rejects_duplicates_and_bad_index() {
        let line = r#"{"id":"a","text":"Someone called.","ip_index":0,"original":"someone","population":"native"}"#;
        let data = format!("{line}\n\n{line}\n");
        assert!(matches!(read_corpus(data.as_bytes()), Err(CorpusError::DuplicateId { line: 3, .. })));

        let bad = r#"{"id":"a","text":"Someone called.","ip_index":1,"original":"someone","population":"native"}"#;
        assert!(matches!(read_corpus(bad.as_bytes()), Err(CorpusError::Parse { line: 1, .. })));
    }

    #[test]
    fn unknown_fields_survive() {
        let line = r#"{"id":"a","text":"Someone called.","ip_index":0,"original":"someone","population":"learner","class":"MIXED"}"#;
        let c = read_corpus(line.as_bytes()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.records[0].extra_str("class"), Some("MIXED"));
        let mut out = Vec::new();
        write_corpus(&c, &mut out).unwrap();
        assert_eq!(read_corpus(&out[..]).unwrap(), c);
    }
}
