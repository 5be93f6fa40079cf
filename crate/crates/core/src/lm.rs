//! Sentence scoring.
//!
//! Two backends implement [`Scorer`]: a native interpolated n-gram model
//! ([`NgramModel`]) and an HTTP client for a remote scoring service
//! ([`RemoteScorer`]). Scores are natural-log values; higher means more
//! probable. Only scores from the same backend are ever compared.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;

const MODEL_MAGIC: &str = "indefinite-ngram";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("scorer returned HTTP {status}: {message}")]
    Server { status: u16, message: String },
}

#[derive(Debug, Error)]
pub enum LmError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that assigns a log-score to a token sequence.
pub trait Scorer: Send + Sync {
    /// One score per sentence, in input order.
    fn score_batch(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScoreError>;

    fn score_tokens(&self, tokens: &[String]) -> Result<f64, ScoreError> {
        let mut out = self.score_batch(std::slice::from_ref(&tokens.to_vec()))?;
        out.pop().ok_or_else(|| ScoreError::Protocol("scorer returned no score".into()))
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score_batch(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScoreError> {
        (**self).score_batch(batch)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score_batch(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScoreError> {
        (**self).score_batch(batch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramConfig {
    pub order: usize,
    /// `lambdas[k - 1]` weights the order-`k` estimate; must sum to 1.
    pub lambdas: Vec<f64>,
    pub add_k: f64,
    pub min_count: u64,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig::with_order(3)
    }
}

impl NgramConfig {
    /// Default weights: 0.1/0.3/0.6 for a trigram model, otherwise weights
    /// doubling with order, normalized.
    pub fn with_order(order: usize) -> Self {
        let lambdas = if order == 3 {
            vec![0.1, 0.3, 0.6]
        } else {
            let raw: Vec<f64> = (0..order).map(|k| 2f64.powi(k as i32)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        };
        NgramConfig { order, lambdas, add_k: 1.0, min_count: 1 }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        let bad = |m: &str| Err(LmError::Config(m.to_string()));
        if self.order == 0 {
            return bad("order must be at least 1");
        }
        if self.lambdas.len() != self.order {
            return bad("need exactly one lambda per order");
        }
        if self.lambdas.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return bad("lambdas must be non-negative");
        }
        if !(self.lambdas[0] > 0.0) {
            return bad("the unigram weight must be positive");
        }
        if (self.lambdas.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad("lambdas must sum to 1");
        }
        if !(self.add_k > 0.0) || !self.add_k.is_finite() {
            return bad("add_k must be positive");
        }
        if self.min_count == 0 {
            return bad("min_count must be at least 1");
        }
        Ok(())
    }
}

/// Interpolated maximum-likelihood n-gram model with an add-k unigram floor.
///
/// For every predicted position (each real token plus the closing `</s>`)
/// the n-grams of every order ending there are counted, so `<s>` is only
/// ever history, never a prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    config: NgramConfig,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    /// `counts[k - 1]` holds order-`k` n-gram counts.
    counts: Vec<HashMap<Vec<u32>, u64>>,
    /// `contexts[k - 1]` holds the count of each order-`k` history (`k >= 2`).
    contexts: Vec<HashMap<Vec<u32>, u64>>,
    unigram_total: u64,
}

impl NgramModel {
    pub fn train<S: AsRef<str>>(sentences: &[Vec<S>], config: NgramConfig) -> Result<NgramModel, LmError> {
        config.validate()?;
        if sentences.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let lowered: Vec<Vec<String>> = sentences
            .iter()
            .map(|s| s.iter().map(|t| t.as_ref().to_lowercase()).collect())
            .collect();

        let mut freq: HashMap<&str, u64> = HashMap::new();
        for t in lowered.iter().flatten() {
            *freq.entry(t.as_str()).or_default() += 1;
        }
        let mut kept: Vec<&str> = freq
            .iter()
            .filter(|(t, &c)| c >= config.min_count && ![BOS, EOS, UNK].contains(t))
            .map(|(t, _)| *t)
            .collect();
        kept.sort_unstable();
        let vocab: Vec<String> = [BOS, EOS, UNK].into_iter().chain(kept).map(String::from).collect();

        let mut model = NgramModel::empty(config, vocab);
        for sentence in &lowered {
            let ids = model.padded_ids(sentence);
            for i in model.config.order - 1..ids.len() {
                for k in 1..=model.config.order {
                    let gram = &ids[i + 1 - k..=i];
                    *model.counts[k - 1].entry(gram.to_vec()).or_default() += 1;
                }
            }
        }
        model.rebuild_derived();
        Ok(model)
    }

    fn empty(config: NgramConfig, vocab: Vec<String>) -> NgramModel {
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let order = config.order;
        NgramModel {
            config,
            vocab,
            index,
            counts: vec![HashMap::new(); order],
            contexts: vec![HashMap::new(); order],
            unigram_total: 0,
        }
    }

    fn rebuild_derived(&mut self) {
        for k in 2..=self.config.order {
            let mut ctx: HashMap<Vec<u32>, u64> = HashMap::new();
            for (gram, &c) in &self.counts[k - 1] {
                *ctx.entry(gram[..k - 1].to_vec()).or_default() += c;
            }
            self.contexts[k - 1] = ctx;
        }
        self.unigram_total = self.counts[0].values().sum();
    }

    pub fn config(&self) -> &NgramConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn id(&self, token: &str) -> u32 {
        let lower = token.to_lowercase();
        self.index.get(&lower).copied().unwrap_or(UNK_ID)
    }

    fn padded_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        let mut ids = vec![BOS_ID; self.config.order - 1];
        ids.extend(tokens.iter().map(|t| self.id(t.as_ref())));
        ids.push(EOS_ID);
        ids
    }

    /// Raw count of an n-gram (tokens are lowercased and mapped to `<unk>`).
    pub fn count<S: AsRef<str>>(&self, gram: &[S]) -> u64 {
        let k = gram.len();
        if k == 0 || k > self.config.order {
            return 0;
        }
        let ids: Vec<u32> = gram.iter().map(|t| self.id(t.as_ref())).collect();
        self.counts[k - 1].get(&ids).copied().unwrap_or(0)
    }

    /// Probability of `token` after `history`.
    ///
    /// `P = sum_k lambda_k P_k / sum_k lambda_k`, where `P_1` is the add-k
    /// unigram estimate and `P_k` the maximum-likelihood estimate from the
    /// last `k - 1` tokens; orders whose history was never seen drop out of
    /// both sums. The distribution is over the whole vocabulary, reserved
    /// tokens included. Only the last `order - 1` history tokens matter; shorter histories are
    /// left-padded with `<s>`. Out-of-vocabulary tokens score as `<unk>`.
    pub fn next_prob<S: AsRef<str>>(&self, history: &[S], token: &str) -> f64 {
        let need = self.config.order - 1;
        let mut ctx: Vec<u32> = history.iter().map(|t| self.id(t.as_ref())).collect();
        if ctx.len() < need {
            let mut padded = vec![BOS_ID; need - ctx.len()];
            padded.extend(ctx);
            ctx = padded;
        }
        let ctx = &ctx[ctx.len() - need..];
        self.prob_ids(ctx, self.id(token))
    }

    /// `ctx` must hold exactly `order - 1` ids.
    fn prob_ids(&self, ctx: &[u32], w: u32) -> f64 {
        let unigram = (self.counts[0].get(&[w][..]).copied().unwrap_or(0) as f64 + self.config.add_k)
            / (self.unigram_total as f64 + self.config.add_k * self.vocab.len() as f64);
        let mut p = self.config.lambdas[0] * unigram;
        let mut weight = self.config.lambdas[0];
        let mut gram = Vec::with_capacity(self.config.order);
        for k in 2..=self.config.order {
            let history = &ctx[ctx.len() - (k - 1)..];
            let hc = self.contexts[k - 1].get(history).copied().unwrap_or(0);
            if hc == 0 {
                continue;
            }
            gram.clear();
            gram.extend_from_slice(history);
            gram.push(w);
            let c = self.counts[k - 1].get(&gram).copied().unwrap_or(0);
            p += self.config.lambdas[k - 1] * c as f64 / hc as f64;
            weight += self.config.lambdas[k - 1];
        }
        p / weight
    }

    /// Natural-log probability of the sentence, including the closing `</s>`.
    pub fn score<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let ids = self.padded_ids(tokens);
        let order = self.config.order;
        (order - 1..ids.len())
            .map(|i| self.prob_ids(&ids[i + 1 - order..i], ids[i]).ln())
            .sum()
    }

    /// Log-probability of the tokens alone, without the closing `</s>` term.
    ///
    /// Unlike [`NgramModel::score`], this strictly decreases as tokens are appended.
    pub fn prefix_score<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let ids = self.padded_ids(tokens);
        let order = self.config.order;
        (order - 1..ids.len() - 1)
            .map(|i| self.prob_ids(&ids[i + 1 - order..i], ids[i]).ln())
            .sum()
    }

    /// Writes the line-based model dump.
    ///
    /// ```text
    /// indefinite-ngram 1
    /// order <n>
    /// lambdas <l1> ... <ln>        (unigram weight first)
    /// add_k <k>
    /// min_count <m>
    /// vocab <V>
    /// <JSON string per token>      (V lines; ids are line positions)
    /// ngrams <k> <count of lines>  (for k = 1..n)
    /// <count>\t<id> <id> ...
    /// ```
    ///
    /// Floats use Rust's shortest round-trip formatting, so a reload scores
    /// bit-identically.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), LmError> {
        let mut head = String::new();
        let _ = writeln!(head, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(head, "order {}", self.config.order);
        let lambdas: Vec<String> = self.config.lambdas.iter().map(f64::to_string).collect();
        let _ = writeln!(head, "lambdas {}", lambdas.join(" "));
        let _ = writeln!(head, "add_k {}", self.config.add_k);
        let _ = writeln!(head, "min_count {}", self.config.min_count);
        let _ = writeln!(head, "vocab {}", self.vocab.len());
        w.write_all(head.as_bytes())?;
        for t in &self.vocab {
            writeln!(w, "{}", serde_json::Value::from(t.as_str()))?;
        }
        for (k, table) in self.counts.iter().enumerate() {
            writeln!(w, "ngrams {} {}", k + 1, table.len())?;
            let mut rows: Vec<(&Vec<u32>, &u64)> = table.iter().collect();
            rows.sort_unstable();
            for (gram, c) in rows {
                let ids: Vec<String> = gram.iter().map(u32::to_string).collect();
                writeln!(w, "{c}\t{}", ids.join(" "))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LmError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<NgramModel, LmError> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String), LmError> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(LmError::Format { line: 0, message: format!("unexpected end of file, expected {what}") }),
            }
        };
        fn field<'a>(line: usize, text: &'a str, key: &str) -> Result<&'a str, LmError> {
            text.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| LmError::Format { line, message: format!("expected `{key}`") })
        }
        fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, LmError> {
            s.trim().parse().map_err(|_| LmError::Format { line, message: format!("bad number `{s}`") })
        }

        let (n, l) = next("header")?;
        if l.trim() != format!("{MODEL_MAGIC} {MODEL_VERSION}") {
            return Err(LmError::Format { line: n, message: "not an indefinite-ngram v1 model".into() });
        }
        let (n, l) = next("order")?;
        let order: usize = num(n, field(n, &l, "order")?)?;
        let (n, l) = next("lambdas")?;
        let lambdas = field(n, &l, "lambdas")?
            .split_whitespace()
            .map(|x| num::<f64>(n, x))
            .collect::<Result<Vec<_>, _>>()?;
        let (n, l) = next("add_k")?;
        let add_k: f64 = num(n, field(n, &l, "add_k")?)?;
        let (n, l) = next("min_count")?;
        let min_count: u64 = num(n, field(n, &l, "min_count")?)?;
        let config = NgramConfig { order, lambdas, add_k, min_count };
        config.validate()?;

        let (n, l) = next("vocab")?;
        let vsize: usize = num(n, field(n, &l, "vocab")?)?;
        let mut vocab = Vec::with_capacity(vsize);
        for _ in 0..vsize {
            let (n, l) = next("vocab entry")?;
            let t: String = serde_json::from_str(&l).map_err(|e| LmError::Format { line: n, message: e.to_string() })?;
            vocab.push(t);
        }
        if vocab.len() < 3 || vocab[..3] != [BOS, EOS, UNK] {
            return Err(LmError::Format { line: 0, message: "vocabulary must start with <s>, </s>, <unk>".into() });
        }
        let mut model = NgramModel::empty(config, vocab);
        for k in 1..=order {
            let (n, l) = next("ngrams section")?;
            let rest = field(n, &l, "ngrams")?;
            let mut parts = rest.split_whitespace();
            let got_k: usize = num(n, parts.next().unwrap_or(""))?;
            let rows: usize = num(n, parts.next().unwrap_or(""))?;
            if got_k != k {
                return Err(LmError::Format { line: n, message: format!("expected ngrams {k}") });
            }
            for _ in 0..rows {
                let (n, l) = next("ngram row")?;
                let (c, ids) = l
                    .split_once('\t')
                    .ok_or_else(|| LmError::Format { line: n, message: "expected `<count>\\t<ids>`".into() })?;
                let gram = ids.split_whitespace().map(|x| num::<u32>(n, x)).collect::<Result<Vec<_>, _>>()?;
                if gram.len() != k || gram.iter().any(|&id| id as usize >= model.vocab.len()) {
                    return Err(LmError::Format { line: n, message: "bad n-gram ids".into() });
                }
                model.counts[k - 1].insert(gram, num(n, c)?);
            }
        }
        model.rebuild_derived();
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<NgramModel, LmError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

impl Scorer for NgramModel {
    fn score_batch(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScoreError> {
        Ok(batch.par_iter().map(|s| self.score(s)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Base URL of the service; `/score` is appended unless already present.
    pub endpoint: String,
    pub timeout: Duration,
    /// Extra attempts after the first failure.
    pub retries: u32,
    /// Initial backoff, doubled after every failed attempt.
    pub backoff: Duration,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(30),
            retries: 3,
            backoff: Duration::from_millis(200),
            batch_size: 32,
            max_in_flight: 4,
        }
    }

    fn score_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/score") {
            base.to_string()
        } else {
            format!("{base}/score")
        }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    sentences: &'a [String],
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

/// Client for the `/score` wire protocol.
///
/// Request: `POST /score` with `{"sentences": ["...", ...]}`; tokens are
/// joined with single spaces. Response: `{"scores": [float, ...]}` of equal
/// length, HTTP 200. Errors come back as 4xx/5xx with `{"error": "..."}`.
pub struct RemoteScorer {
    config: RemoteConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Retry(ScoreError),
    Fatal(ScoreError),
}

impl RemoteScorer {
    pub fn new(config: RemoteConfig) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build();
        RemoteScorer { agent: ureq::Agent::new_with_config(agent_config), config }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn post_once(&self, sentences: &[String]) -> Result<Vec<f64>, Attempt> {
        let body = serde_json::to_vec(&ScoreRequest { sentences })
            .map_err(|e| Attempt::Fatal(ScoreError::Protocol(e.to_string())))?;
        let mut resp = self
            .agent
            .post(&self.config.score_url())
            .header("content-type", "application/json")
            .send(&body[..])
            .map_err(|e| Attempt::Retry(ScoreError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(ScoreError::Transport(e.to_string())))?;
        if status != 200 {
            let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
            let err = ScoreError::Server { status, message };
            return Err(if status >= 500 || status == 408 || status == 429 { Attempt::Retry(err) } else { Attempt::Fatal(err) });
        }
        let parsed: ScoreResponse = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(ScoreError::Protocol(format!("malformed response: {e}"))))?;
        if parsed.scores.len() != sentences.len() {
            return Err(Attempt::Fatal(ScoreError::Protocol(format!(
                "sent {} sentences, received {} scores",
                sentences.len(),
                parsed.scores.len()
            ))));
        }
        if parsed.scores.iter().any(|s| !s.is_finite()) {
            return Err(Attempt::Fatal(ScoreError::Protocol("non-finite score".into())));
        }
        Ok(parsed.scores)
    }

    fn post_with_retry(&self, sentences: &[String]) -> Result<Vec<f64>, ScoreError> {
        let mut delay = self.config.backoff;
        let mut attempt = 0;
        loop {
            match self.post_once(sentences) {
                Ok(scores) => return Ok(scores),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt >= self.config.retries => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::debug!("retrying remote scorer after error: {e}");
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                    attempt += 1;
                }
            }
        }
    }

    /// Scores raw sentence strings.
    pub fn score_sentences(&self, sentences: &[String]) -> Result<Vec<f64>, ScoreError> {
        if sentences.is_empty() {
            return Ok(Vec::new());
        }
        let chunks: Vec<&[String]> = sentences.chunks(self.config.batch_size.max(1)).collect();
        let mut out = Vec::with_capacity(sentences.len());
        for wave in chunks.chunks(self.config.max_in_flight.max(1)) {
            let results: Vec<Result<Vec<f64>, ScoreError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = wave.iter().map(|chunk| scope.spawn(|| self.post_with_retry(chunk))).collect();
                handles.into_iter().map(|h| h.join().expect("scorer worker panicked")).collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }
}

impl Scorer for RemoteScorer {
    fn score_batch(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScoreError> {
        let sentences: Vec<String> = batch.iter().map(|t| t.join(" ")).collect();
        self.score_sentences(&sentences)
    }
}
