//! The `indefinite` command line.
//!
//! Exit codes: 0 on success, 1 when an input, flag or file fails
//! validation, 2 when work fails at run time (I/O on outputs, the remote
//! scorer). Data goes to files or standard output; everything else goes to
//! standard error.

use std::collections::{HashMap, HashSet};
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{ArgAction, CommandFactory, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::Value;

use crate::analysis::{
    detect_all, detection_report, felicity_of, infelicity_by_class, usage_shares, ConfidenceFilter, Felicity,
};
use crate::annotation::{
    aggregate_all, infelicity_rate, load_annotations, mean_kappa, AnnotationAggregate, GoldEntry, IdiomStoplist,
};
use crate::classifier::{CoarseClass, RuleConfig, Rules};
use crate::corpus::{tokenize, CorpusReader, Population, SentenceRecord};
use crate::lm::{NgramConfig, NgramModel, RemoteConfig, RemoteScorer, Scorer};
use crate::synth::{synth_corpus, training_sentences};
use crate::typology::{
    counts_from_grid, embed_matrix, load_colex_records, build_matrix, parse_matrix, DistanceTransform,
};

/// Environment variable holding a default remote scorer URL for `detect`.
pub const ENV_SCORER_ENDPOINT: &str = "INDEF_SCORER_ENDPOINT";
/// Environment variable holding the remote scorer timeout in milliseconds.
pub const ENV_SCORER_TIMEOUT: &str = "INDEF_SCORER_TIMEOUT_MS";

/// Extra field set on ingested records that match the idiom stoplist.
pub const IDIOM_FIELD: &str = "idiom";
/// Field added by `classify`.
pub const CLASS_FIELD: &str = "class";

const CHUNK: usize = 4096;

#[derive(Debug, Parser)]
#[command(name = "indefinite", version, about = "Indefinite-pronoun corpus pipeline", args_override_self = true)]
struct Cli {
    /// TOML file of flag values. Top-level keys apply to every subcommand
    /// that has such a flag; a `[subcommand]` table applies to one. Flags
    /// given on the command line win. Must precede the subcommand.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Log more (repeat for debug output).
    #[arg(short, long, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn raw text (one sentence per line) into a corpus, one record per pronoun.
    Ingest(IngestArgs),
    /// Label every record with its coarse usage class.
    Classify(ClassifyArgs),
    /// Collapse five-annotator choices into gold labels.
    Aggregate(AggregateArgs),
    /// Train an interpolated n-gram model.
    TrainLm(TrainLmArgs),
    /// Flag infelicitous pronouns by comparing sentence scores.
    Detect(DetectArgs),
    /// Some-/any- usage shares per population, optionally per class.
    Stats(StatsArgs),
    /// Project usage classes into the plane from colexification data.
    Mds(MdsArgs),
    /// Generate a synthetic corpus with known gold labels.
    Synth(SynthArgs),
}

#[derive(Debug, clap::Args)]
struct IngestArgs {
    /// Raw text, one sentence per line; `-` reads standard input.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Corpus file to write; `-` writes standard output.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Population of the writers.
    #[arg(long, value_parser = parse_population)]
    population: Population,
    /// Prefix for generated record ids.
    #[arg(long, default_value = "s")]
    id_prefix: String,
    /// Idiom stoplist, one pattern per line; defaults to a small built-in list.
    #[arg(long, value_name = "PATH", conflicts_with = "no_idioms")]
    idioms: Option<PathBuf>,
    /// Do not flag idioms.
    #[arg(long)]
    no_idioms: bool,
}

#[derive(Debug, clap::Args)]
struct ClassifyArgs {
    /// Corpus file; `-` reads standard input.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Labeled corpus to write; `-` writes standard output.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Rule configuration (TOML); built-in lists when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct AggregateArgs {
    /// Annotation file: `sentence_id,original,c1,c2,c3,c4,c5` with S/A/O codes.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Confidence threshold in (0.5, 1].
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    /// Gold file to write; `-` writes standard output.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Corpus to join by id; needed before `detect`. Idiom-flagged records are dropped.
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrainFormat {
    /// `.jsonl` files are read as corpora, anything else as text.
    Auto,
    /// One sentence per line.
    Text,
    /// Corpus records.
    Jsonl,
}

#[derive(Debug, clap::Args)]
struct TrainLmArgs {
    /// Training sentences; `-` reads standard input.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = TrainFormat::Auto)]
    format: TrainFormat,
    /// Model file to write.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Comma-separated interpolation weights, lowest order first.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Additive smoothing constant for the unigram estimate.
    #[arg(long, default_value_t = 1.0)]
    add_k: f64,
    /// Tokens seen fewer times become `<unk>`.
    #[arg(long, default_value_t = 1)]
    min_count: u64,
}

#[derive(Debug, clap::Args)]
struct DetectArgs {
    /// Gold file with sentences attached.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// `ngram:PATH` or `remote:URL`; falls back to `remote:$INDEF_SCORER_ENDPOINT`.
    #[arg(long, value_name = "SPEC")]
    scorer: Option<String>,
    /// Minimum annotation confidence; 1.0 keeps unanimous items only.
    #[arg(long, default_value_t = 0.8)]
    confidence: f64,
    /// Report file to write; `-` writes standard output.
    #[arg(long, value_name = "PATH")]
    report: PathBuf,
    /// Per-sentence outcomes to write as JSON lines.
    #[arg(long, value_name = "PATH")]
    outcomes: Option<PathBuf>,
    /// Remote request timeout in milliseconds.
    #[arg(long, env = ENV_SCORER_TIMEOUT, default_value_t = 30_000)]
    timeout_ms: u64,
    /// Remote retries after the first failed attempt.
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// Sentences per remote request.
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Concurrent remote requests.
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
}

#[derive(Debug, clap::Args)]
struct StatsArgs {
    /// Corpus, labeled by `classify` or not.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Add one row per usage class.
    #[arg(long)]
    by_class: bool,
    /// Usage-share table to write; `-` writes standard output.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Rule configuration for records without a `class` field.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Gold file; with `--infelicity-out`, tabulates infelicity per class.
    #[arg(long, value_name = "PATH", requires = "infelicity_out")]
    gold: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "gold")]
    infelicity_out: Option<PathBuf>,
    /// Confidence threshold applied to the gold labels.
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TransformArg {
    /// `1 - shared / languages`.
    OneMinusShare,
    /// `sqrt(s_ii + s_jj - 2 s_ij)`.
    KernelSqrt,
}

#[derive(Debug, clap::Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["matrix", "records"])))]
struct MdsArgs {
    /// Square count matrix with a header row of class names.
    #[arg(long, value_name = "PATH", requires = "languages")]
    matrix: Option<PathBuf>,
    /// Number of languages behind `--matrix`.
    #[arg(long)]
    languages: Option<u32>,
    /// Colexification records: `language,term,CLASS|CLASS|...`.
    #[arg(long, value_name = "PATH")]
    records: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TransformArg::OneMinusShare)]
    transform: TransformArg,
    #[arg(long, default_value_t = 2)]
    dims: usize,
    /// Coordinates to write; `-` writes standard output.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    size: usize,
    /// Fraction of sentences whose pronoun is flipped.
    #[arg(long, default_value_t = 0.2)]
    rate: f64,
    /// Gold file with sentences attached.
    #[arg(long, value_name = "PATH")]
    gold: PathBuf,
    /// Plain corpus file.
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    /// Uncorrupted training sentences, one per line.
    #[arg(long, value_name = "PATH")]
    train_out: Option<PathBuf>,
    #[arg(long, default_value_t = 5000, requires = "train_out")]
    train_size: usize,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

fn invalid(msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(msg.to_string())
}

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

type CliResult<T> = Result<T, CliError>;

fn parse_population(s: &str) -> Result<Population, String> {
    s.parse().map_err(|e: crate::corpus::CorpusError| e.to_string())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Classify(a) => classify(a),
        Command::Aggregate(a) => aggregate_cmd(a),
        Command::TrainLm(a) => train_lm(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Stats(a) => stats(a),
        Command::Mds(a) => mds(a),
        Command::Synth(a) => synth(a),
    }
}

/// Splices values from the top-level `--config` file in front of the
/// subcommand's own arguments.
fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut config = None;
    let mut sub_at = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if !a.starts_with('-') {
            sub_at = Some(i);
            break;
        }
        i += 1;
    }
    let (Some(path), Some(sub_at)) = (config, sub_at) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| invalid(format!("cannot read config `{}`: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e| invalid(format!("config `{}`: {e}", path.display())))?;

    let root = Cli::command();
    let name = args[sub_at].to_string_lossy().to_string();
    let Some(sub) = root.find_subcommand(&name) else {
        return Ok(args);
    };
    let flags_of = |cmd: &clap::Command| -> HashMap<String, bool> {
        cmd.get_arguments()
            .filter_map(|a| {
                let is_switch = matches!(a.get_action(), ArgAction::SetTrue);
                a.get_long().map(|l| (l.to_string(), is_switch))
            })
            .collect()
    };
    let known = flags_of(sub);
    let anywhere: HashSet<String> = root.get_subcommands().flat_map(|s| flags_of(s).into_keys()).collect();

    let mut injected = Vec::new();
    let mut push = |key: &str, value: &toml::Value, strict: bool| -> CliResult<()> {
        let flag = key.replace('_', "-");
        let Some(&switch) = known.get(&flag) else {
            if strict || !anywhere.contains(&flag) {
                return Err(invalid(format!("config `{}`: `{key}` is not a flag of `{name}`", path.display())));
            }
            return Ok(());
        };
        let rendered = match value {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(n) => n.to_string(),
            toml::Value::Float(x) => x.to_string(),
            toml::Value::Boolean(b) if switch => {
                if *b {
                    injected.push(OsString::from(format!("--{flag}")));
                }
                return Ok(());
            }
            toml::Value::Array(xs) => xs
                .iter()
                .map(|x| match x {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(n) => Ok(n.to_string()),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    _ => Err(invalid(format!("config `{}`: unsupported list item for `{key}`", path.display()))),
                })
                .collect::<CliResult<Vec<_>>>()?
                .join(","),
            _ => return Err(invalid(format!("config `{}`: unsupported value for `{key}`", path.display()))),
        };
        injected.push(OsString::from(format!("--{flag}")));
        injected.push(OsString::from(rendered));
        Ok(())
    };
    for (key, value) in &table {
        match value {
            toml::Value::Table(section) => {
                if root.find_subcommand(key).is_none() {
                    return Err(invalid(format!("config `{}`: unknown section `[{key}]`", path.display())));
                }
                if *key == name {
                    for (k, v) in section {
                        push(k, v, true)?;
                    }
                }
            }
            _ => push(key, value, false)?,
        }
    }
    let mut out = args[..=sub_at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[sub_at + 1..]);
    Ok(out)
}

fn is_dash(p: &Path) -> bool {
    p.as_os_str() == "-"
}

fn open_input(path: &Path) -> CliResult<Box<dyn BufRead>> {
    if is_dash(path) {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).map_err(|e| invalid(format!("cannot open `{}`: {e}", path.display())))?;
    Ok(Box::new(BufReader::new(f)))
}

fn read_text(path: &Path) -> CliResult<String> {
    let mut s = String::new();
    open_input(path)?
        .read_to_string(&mut s)
        .map_err(|e| invalid(format!("cannot read `{}`: {e}", path.display())))?;
    Ok(s)
}

/// Refuses to write over an input file.
fn open_output(path: &Path, inputs: &[&Path]) -> CliResult<Box<dyn Write>> {
    if is_dash(path) {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    if let Ok(target) = path.canonicalize() {
        if inputs.iter().any(|i| i.canonicalize().is_ok_and(|c| c == target)) {
            return Err(invalid(format!("refusing to overwrite input file `{}`", path.display())));
        }
    }
    let f = File::create(path).map_err(|e| runtime(format!("cannot create `{}`: {e}", path.display())))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn write_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| runtime(format!("writing `{}`: {e}", path.display()))
}

fn load_rules(path: Option<&Path>) -> CliResult<Rules> {
    let config = match path {
        Some(p) => RuleConfig::load(p).map_err(|e| invalid(format!("rule config `{}`: {e}", p.display())))?,
        None => RuleConfig::default(),
    };
    config.compile().map_err(invalid)
}

fn read_records(path: &Path) -> CliResult<Vec<SentenceRecord>> {
    CorpusReader::new(open_input(path)?)
        .map(|r| r.map_err(|e| invalid(format!("`{}`: {e}", path.display()))))
        .collect()
}

fn read_gold(path: &Path) -> CliResult<Vec<GoldEntry>> {
    let reader = open_input(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| invalid(format!("cannot read `{}`: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(GoldEntry::from_json_line(&line, i + 1).map_err(|e| invalid(format!("`{}`: {e}", path.display())))?);
    }
    Ok(out)
}

fn check_threshold(t: f64, flag: &str) -> CliResult<()> {
    if t > 0.5 && t <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("--{flag} must be in (0.5, 1], got {t}")))
    }
}

fn ingest(a: IngestArgs) -> CliResult<()> {
    let stoplist = match (&a.idioms, a.no_idioms) {
        (_, true) => None,
        (Some(p), _) => Some(IdiomStoplist::load(p).map_err(|e| invalid(format!("idiom list `{}`: {e}", p.display())))?),
        (None, false) => Some(IdiomStoplist::default()),
    };
    let reader = open_input(&a.input)?;
    let mut out = open_output(&a.out, &[&a.input])?;
    let (mut written, mut skipped, mut idioms) = (0usize, 0usize, 0usize);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| invalid(format!("cannot read `{}`: {e}", a.input.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let records = SentenceRecord::from_text(&format!("{}{:06}", a.id_prefix, i + 1), &line, a.population);
        if records.is_empty() {
            skipped += 1;
            continue;
        }
        for mut r in records {
            if stoplist.as_ref().is_some_and(|s| s.matches(&r)) {
                r.extra.insert(IDIOM_FIELD.into(), Value::Bool(true));
                idioms += 1;
            }
            writeln!(out, "{}", r.to_json_line()).map_err(write_err(&a.out))?;
            written += 1;
        }
    }
    out.flush().map_err(write_err(&a.out))?;
    log::info!("ingest: {written} records, {idioms} flagged as idioms, {skipped} lines without a target pronoun");
    Ok(())
}

fn labeled_line(r: &SentenceRecord, class: CoarseClass) -> String {
    let mut obj = r.to_json();
    obj.insert(CLASS_FIELD.into(), Value::from(class.as_str()));
    Value::Object(obj).to_string()
}

fn classify(a: ClassifyArgs) -> CliResult<()> {
    let rules = load_rules(a.config.as_deref())?;
    let mut inputs: Vec<&Path> = vec![&a.input];
    if let Some(c) = &a.config {
        inputs.push(c);
    }
    let mut reader = CorpusReader::new(open_input(&a.input)?);
    let mut out = open_output(&a.out, &inputs)?;
    let mut total = 0usize;
    loop {
        let chunk: Vec<SentenceRecord> = reader
            .by_ref()
            .take(CHUNK)
            .map(|r| r.map_err(|e| invalid(format!("`{}`: {e}", a.input.display()))))
            .collect::<CliResult<_>>()?;
        if chunk.is_empty() {
            break;
        }
        let lines: Vec<String> = chunk.par_iter().map(|r| labeled_line(r, rules.classify(r))).collect();
        for l in &lines {
            writeln!(out, "{l}").map_err(write_err(&a.out))?;
        }
        total += chunk.len();
        log::debug!("classify: {total} records");
    }
    out.flush().map_err(write_err(&a.out))?;
    log::info!("classify: {total} records");
    Ok(())
}

fn aggregate_cmd(a: AggregateArgs) -> CliResult<()> {
    check_threshold(a.threshold, "threshold")?;
    let items = load_annotations(&a.input).map_err(|e| invalid(format!("`{}`: {e}", a.input.display())))?;
    let aggregates = aggregate_all(&items, a.threshold).map_err(invalid)?;

    let mut entries = Vec::with_capacity(aggregates.len());
    let mut idioms = 0usize;
    if let Some(corpus_path) = &a.corpus {
        let mut by_id: HashMap<String, SentenceRecord> =
            read_records(corpus_path)?.into_iter().map(|r| (r.id.clone(), r)).collect();
        for agg in aggregates {
            let record = by_id
                .remove(&agg.sentence_id)
                .ok_or_else(|| invalid(format!("annotated sentence `{}` is not in the corpus", agg.sentence_id)))?;
            if record.original != agg.original {
                return Err(invalid(format!(
                    "sentence `{}`: corpus has `{}`, annotations say `{}`",
                    agg.sentence_id, record.original, agg.original
                )));
            }
            if record.extra.get(IDIOM_FIELD) == Some(&Value::Bool(true)) {
                idioms += 1;
                continue;
            }
            entries.push(GoldEntry { aggregate: agg, record: Some(record) });
        }
    } else {
        entries.extend(aggregates.into_iter().map(|aggregate| GoldEntry { aggregate, record: None }));
    }

    let mut inputs: Vec<&Path> = vec![&a.input];
    if let Some(c) = &a.corpus {
        inputs.push(c);
    }
    let mut out = open_output(&a.out, &inputs)?;
    for e in &entries {
        writeln!(out, "{}", e.to_json_line()).map_err(write_err(&a.out))?;
    }
    out.flush().map_err(write_err(&a.out))?;

    let kept: Vec<AnnotationAggregate> = entries.into_iter().map(|e| e.aggregate).collect();
    let rate = infelicity_rate(&kept, a.threshold).ok();
    let annotator_labels: Vec<Vec<_>> = (0..crate::annotation::ANNOTATORS)
        .map(|k| items.iter().map(|it| it.choices[k]).collect())
        .collect();
    let kappa = mean_kappa(&annotator_labels).ok().flatten();
    log::info!(
        "aggregate: {} items, {idioms} idioms dropped, infelicity rate {}, mean pairwise kappa {}",
        kept.len(),
        rate.map_or("n/a".into(), |r| format!("{r:.3}")),
        kappa.map_or("n/a".into(), |k| format!("{k:.3}"))
    );
    Ok(())
}

fn train_lm(a: TrainLmArgs) -> CliResult<()> {
    let mut config = NgramConfig::with_order(a.order);
    if let Some(l) = a.lambdas {
        config.lambdas = l;
    }
    config.add_k = a.add_k;
    config.min_count = a.min_count;
    config.validate().map_err(invalid)?;

    let jsonl = match a.format {
        TrainFormat::Jsonl => true,
        TrainFormat::Text => false,
        TrainFormat::Auto => a.input.extension().is_some_and(|e| e == "jsonl"),
    };
    let sentences: Vec<Vec<String>> = if jsonl {
        read_records(&a.input)?.into_iter().map(|r| r.tokens).collect()
    } else {
        let mut v = Vec::new();
        for line in open_input(&a.input)?.lines() {
            let line = line.map_err(|e| invalid(format!("cannot read `{}`: {e}", a.input.display())))?;
            let tokens = tokenize(&line);
            if !tokens.is_empty() {
                v.push(tokens);
            }
        }
        v
    };
    let model = NgramModel::train(&sentences, config).map_err(invalid)?;
    let mut out = open_output(&a.out, &[&a.input])?;
    model.write_to(&mut out).map_err(runtime)?;
    out.flush().map_err(write_err(&a.out))?;
    log::info!("train-lm: {} sentences, vocabulary {}", sentences.len(), model.vocab_size());
    Ok(())
}

fn build_scorer(a: &DetectArgs) -> CliResult<(String, Box<dyn Scorer>)> {
    let spec = match &a.scorer {
        Some(s) => s.clone(),
        None => match std::env::var(ENV_SCORER_ENDPOINT) {
            Ok(url) if !url.is_empty() => format!("remote:{url}"),
            _ => return Err(invalid(format!("--scorer is required (or set {ENV_SCORER_ENDPOINT})"))),
        },
    };
    if let Some(path) = spec.strip_prefix("ngram:") {
        let model = NgramModel::load(path).map_err(|e| invalid(format!("model `{path}`: {e}")))?;
        return Ok((spec, Box::new(model)));
    }
    if let Some(url) = spec.strip_prefix("remote:") {
        let url = if url.is_empty() { std::env::var(ENV_SCORER_ENDPOINT).unwrap_or_default() } else { url.to_string() };
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(invalid(format!("remote scorer URL must start with http:// or https://, got `{url}`")));
        }
        if a.batch_size == 0 || a.max_in_flight == 0 {
            return Err(invalid("--batch-size and --max-in-flight must be positive"));
        }
        let mut config = RemoteConfig::new(url);
        config.timeout = Duration::from_millis(a.timeout_ms);
        config.retries = a.retries;
        config.batch_size = a.batch_size;
        config.max_in_flight = a.max_in_flight;
        return Ok((spec, Box::new(RemoteScorer::new(config))));
    }
    Err(invalid(format!("scorer must be `ngram:PATH` or `remote:URL`, got `{spec}`")))
}

fn detect_cmd(a: DetectArgs) -> CliResult<()> {
    check_threshold(a.confidence, "confidence")?;
    let filter = ConfidenceFilter::from_threshold(a.confidence);
    let entries = read_gold(&a.input)?;
    let (spec, scorer) = build_scorer(&a)?;

    let total = entries.len();
    let mut records = Vec::new();
    let mut golds = Vec::new();
    for e in entries {
        let Some(record) = e.record else {
            return Err(invalid(format!(
                "gold entry `{}` has no sentence; run `aggregate --corpus` first",
                e.aggregate.sentence_id
            )));
        };
        if felicity_of(e.aggregate.gold_at(filter.threshold())).is_some() {
            records.push(record);
            golds.push(e.aggregate);
        }
    }
    let outcomes = detect_all(&records, &scorer).map_err(runtime)?;
    let pairs: Vec<_> = outcomes.into_iter().zip(golds).collect();
    let report = detection_report(&pairs, filter).map_err(invalid)?;

    if let Some(path) = &a.outcomes {
        let mut out = open_output(path, &[&a.input])?;
        for (o, g) in &pairs {
            let mut v = serde_json::to_value(o).expect("outcome serializes");
            if let (Value::Object(m), Some(f)) = (&mut v, felicity_of(g.gold_at(filter.threshold()))) {
                m.insert("gold".into(), serde_json::to_value(f).expect("label serializes"));
            }
            writeln!(out, "{v}").map_err(write_err(path))?;
        }
        out.flush().map_err(write_err(path))?;
    }

    let mut doc = serde_json::to_value(&report).expect("report serializes");
    if let Value::Object(m) = &mut doc {
        m.insert("scorer".into(), Value::from(spec));
        m.insert("excluded".into(), Value::from(total - report.n));
    }
    let mut out = open_output(&a.report, &[&a.input])?;
    writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("report serializes")).map_err(write_err(&a.report))?;
    out.flush().map_err(write_err(&a.report))?;
    log::info!(
        "detect: n={} accuracy={:.3} baseline={:.3} F1(infelicitous)={}",
        report.n,
        report.accuracy,
        report.baseline_accuracy,
        report.infelicitous.f1.map_or("n/a".into(), |f| format!("{f:.3}"))
    );
    Ok(())
}

fn stats(a: StatsArgs) -> CliResult<()> {
    check_threshold(a.threshold, "threshold")?;
    let rules = load_rules(a.config.as_deref())?;
    let records = read_records(&a.input)?;
    let classes: Vec<CoarseClass> = records
        .iter()
        .map(|r| match r.extra_str(CLASS_FIELD) {
            Some(c) => c.parse().map_err(|e| invalid(format!("record `{}`: {e}", r.id))),
            None => Ok(rules.classify(r)),
        })
        .collect::<CliResult<_>>()?;
    let class_of: HashMap<&str, CoarseClass> = records.iter().map(|r| r.id.as_str()).zip(classes.iter().copied()).collect();
    let dist = usage_shares(&records, |r| class_of[r.id.as_str()]);

    let mut inputs: Vec<&Path> = vec![&a.input];
    inputs.extend(a.config.as_deref());
    inputs.extend(a.gold.as_deref());
    let mut out = open_output(&a.out, &inputs)?;
    out.write_all(dist.to_csv(a.by_class).as_bytes()).map_err(write_err(&a.out))?;
    out.flush().map_err(write_err(&a.out))?;

    if let (Some(gold_path), Some(inf_path)) = (&a.gold, &a.infelicity_out) {
        let gold = read_gold(gold_path)?;
        let mut tallies: Vec<(CoarseClass, Felicity)> = Vec::new();
        for e in &gold {
            let Some(f) = felicity_of(e.aggregate.gold_at(a.threshold)) else { continue };
            let class = class_of
                .get(e.aggregate.sentence_id.as_str())
                .ok_or_else(|| invalid(format!("gold sentence `{}` is not in `{}`", e.aggregate.sentence_id, a.input.display())))?;
            tallies.push((*class, f));
        }
        let table = infelicity_by_class(tallies);
        let mut out = open_output(inf_path, &inputs)?;
        out.write_all(table.to_csv().as_bytes()).map_err(write_err(inf_path))?;
        out.flush().map_err(write_err(inf_path))?;
    }
    Ok(())
}

fn mds(a: MdsArgs) -> CliResult<()> {
    let (matrix, input) = match (&a.matrix, &a.records) {
        (Some(path), _) => {
            let (classes, grid) = parse_matrix(&read_text(path)?).map_err(|e| invalid(format!("`{}`: {e}", path.display())))?;
            let languages = a.languages.expect("clap enforces --languages");
            (counts_from_grid(classes, &grid, languages).map_err(|e| invalid(format!("`{}`: {e}", path.display())))?, path)
        }
        (None, Some(path)) => {
            let records = load_colex_records(path).map_err(|e| invalid(format!("`{}`: {e}", path.display())))?;
            (build_matrix(&records).map_err(|e| invalid(format!("`{}`: {e}", path.display())))?, path)
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let transform = match a.transform {
        TransformArg::OneMinusShare => DistanceTransform::OneMinusShare,
        TransformArg::KernelSqrt => DistanceTransform::KernelSqrt,
    };
    if a.dims == 0 || a.dims > matrix.classes.len() {
        return Err(invalid(format!("--dims must be between 1 and {}", matrix.classes.len())));
    }
    let embedding = embed_matrix(&matrix, transform, a.dims).map_err(invalid)?;
    let mut out = open_output(&a.out, &[input])?;
    out.write_all(embedding.to_csv().as_bytes()).map_err(write_err(&a.out))?;
    out.flush().map_err(write_err(&a.out))?;
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let s = synth_corpus(a.seed, a.size, a.rate).map_err(invalid)?;
    let mut out = open_output(&a.gold, &[])?;
    for (record, aggregate) in s.corpus.records.iter().zip(&s.gold) {
        let entry = GoldEntry { aggregate: aggregate.clone(), record: Some(record.clone()) };
        writeln!(out, "{}", entry.to_json_line()).map_err(write_err(&a.gold))?;
    }
    out.flush().map_err(write_err(&a.gold))?;
    if let Some(path) = &a.corpus {
        let mut out = open_output(path, &[])?;
        crate::corpus::write_corpus(&s.corpus, &mut out).map_err(runtime)?;
        out.flush().map_err(write_err(path))?;
    }
    if let Some(path) = &a.train_out {
        let mut out = open_output(path, &[])?;
        for sentence in training_sentences(training_seed(a.seed), a.train_size) {
            writeln!(out, "{}", sentence.join(" ")).map_err(write_err(path))?;
        }
        out.flush().map_err(write_err(path))?;
    }
    Ok(())
}

/// Seed for the training stream, kept apart from the evaluation corpus's.
pub fn training_seed(seed: u64) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15)
}
