//! The `lmkit` command line.
//!
//! Every setting can come from a flag, from the subcommand's table in a TOML
//! config file (`[vocab-train]`, keys named like the long flags), or from the
//! built-in default, in that order of precedence. Outputs are written through
//! a temporary file and renamed into place, and each run leaves a
//! `<output>.manifest.json` recording the effective settings, seeds, versions
//! and input/output digests.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::LazyLock;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flate2::read::MultiGzDecoder;
use regex::Regex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    build_documents, emit_training_corpus, normalize_document, read_blocks, CorpusStats, Encoding,
    RuleSegmenter, Source, SourceLayout,
};
use crate::metrics::{evaluate_task, EvalInput, Matching, Task, REPORT_SCHEMA_VERSION};
use crate::pretrain::{
    compute_schedule, generate_instances, group_digits, phase2_quota, round_to, write_binary,
    write_jsonl, InstanceConfig, MaskingConfig, Schedule,
};
use crate::tasks::{
    benchmark_splits, find_split_spec, read_conllu, validate_splits, SplitCounts, SplitSpec,
};
use crate::tokenizer::{
    compare_vocabs, fertility, tokenize_sentence, TokenizerOptions, DEFAULT_MAX_WORD_CHARS,
};
use crate::vocab::{
    build_frequency_vocab, to_wordpiece, SubwordVocabulary, UnigramModel, UnigramTrainer,
};

pub const MANIFEST_VERSION: u32 = 1;
pub const INSTANCE_BINARY_VERSION: u32 = 1;

static LONG_VERSION: LazyLock<String> = LazyLock::new(|| {
    format!(
        "{}\nreport schema {REPORT_SCHEMA_VERSION}\nmanifest schema {MANIFEST_VERSION}\ninstance binary format {INSTANCE_BINARY_VERSION}",
        env!("CARGO_PKG_VERSION")
    )
});

#[derive(Debug, Parser)]
#[command(
    name = "lmkit",
    version,
    long_version = LONG_VERSION.as_str(),
    about = "Corpus preparation, subword vocabularies, pretraining data and benchmark evaluation"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// TOML file with one table per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize and sentence-split raw sources into a training corpus.
    Preprocess(PreprocessArgs),
    /// Train a unigram subword model.
    VocabTrain(VocabTrainArgs),
    /// Convert a unigram model into a WordPiece vocabulary file.
    VocabConvert(VocabConvertArgs),
    /// Build a most-frequent-words vocabulary.
    FreqVocab(FreqVocabArgs),
    /// Tokenize lines of text into WordPiece pieces.
    Tokenize(TokenizeArgs),
    /// Report fertility of one vocabulary, or compare two.
    Analyze(AnalyzeArgs),
    /// Generate masked-LM / next-sentence pretraining instances.
    PretrainData(PretrainDataArgs),
    /// Compute pretraining step arithmetic.
    Schedule(ScheduleArgs),
    /// Check dataset split sizes against the benchmark table.
    ValidateSplits(ValidateSplitsArgs),
    /// Score predictions against gold annotation.
    Evaluate(EvaluateArgs),
}

/// Bad invocation: exit status 2.
#[derive(Debug, Error)]
#[error("{0}")]
struct UsageError(String);

/// A check ran and did not pass: exit status 1, message already printed.
#[derive(Debug, Error)]
#[error("{0}")]
struct CheckFailed(String);

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn required<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| usage(format!("missing --{key} (flag or config key `{key}`)")))
}

/// Parsed config file: top-level keys plus one table per subcommand.
#[derive(Debug, Default)]
struct Config {
    table: toml::Table,
}

impl Config {
    fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        Ok(Config { table })
    }

    fn section(&self, name: &str) -> Result<serde_json::Map<String, serde_json::Value>> {
        match self.table.get(name) {
            None => Ok(Default::default()),
            Some(toml::Value::Table(t)) => match serde_json::to_value(t)? {
                serde_json::Value::Object(m) => Ok(m),
                _ => unreachable!("tables serialize to objects"),
            },
            Some(_) => Err(usage(format!("config key `{name}` must be a table"))),
        }
    }

    fn jobs(&self) -> Result<Option<usize>> {
        match self.table.get("jobs") {
            None => Ok(None),
            Some(toml::Value::Integer(n)) if *n > 0 => Ok(Some(*n as usize)),
            Some(v) => Err(usage(format!(
                "config `jobs` must be a positive integer, got {v}"
            ))),
        }
    }
}

/// Overlays set flags on the config table and deserializes the result.
fn resolve<T: Serialize + DeserializeOwned>(
    flags: &T,
    config: &Config,
    section: &str,
) -> Result<T> {
    let mut merged = config.section(section)?;
    if let serde_json::Value::Object(flags) = serde_json::to_value(flags)? {
        for (k, v) in flags {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(serde_json::Value::Object(merged))
        .map_err(|e| usage(format!("[{section}]: {e}")))
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    manifest_version: u32,
    tool: &'static str,
    version: &'static str,
    formats: BTreeMap<&'static str, u32>,
    command: &'static str,
    config: serde_json::Value,
    config_sha256: String,
    seeds: BTreeMap<&'static str, u64>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Tracks the files a run reads and writes.
struct Run {
    manifest: Manifest,
}

impl Run {
    fn new<T: Serialize>(command: &'static str, settings: &T) -> Result<Run> {
        let config = serde_json::to_value(settings)?;
        let config_sha256 = sha256_hex(&serde_json::to_vec(&config)?);
        Ok(Run {
            manifest: Manifest {
                manifest_version: MANIFEST_VERSION,
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                formats: BTreeMap::from([
                    ("report_schema", REPORT_SCHEMA_VERSION),
                    ("instance_binary", INSTANCE_BINARY_VERSION),
                ]),
                command,
                config,
                config_sha256,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        })
    }

    fn seed(&mut self, name: &'static str, value: u64) {
        self.manifest.seeds.insert(name, value);
    }

    /// Reads a whole input file, gunzipping `*.gz`.
    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.manifest.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&raw),
        });
        if path.extension().is_some_and(|e| e == "gz") {
            let mut out = Vec::new();
            MultiGzDecoder::new(raw.as_slice())
                .read_to_end(&mut out)
                .with_context(|| format!("decompressing {}", path.display()))?;
            return Ok(out);
        }
        Ok(raw)
    }

    fn read_text(&mut self, path: &Path) -> Result<String> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.manifest.outputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Writes the manifest beside the first output, if there is one.
    fn finish(self) -> Result<()> {
        let Some(first) = self.manifest.outputs.first() else {
            return Ok(());
        };
        let path = PathBuf::from(format!("{}.manifest.json", first.path));
        let mut bytes = serde_json::to_vec_pretty(&self.manifest)?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn to_json_line<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes to `path` if given, else to standard output.
fn emit(run: &mut Run, path: Option<&PathBuf>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => run.write(p, bytes),
        None => {
            io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn tokenizer_options(split_punct: Option<bool>, max_word_chars: Option<usize>) -> TokenizerOptions {
    TokenizerOptions {
        split_punctuation: split_punct.unwrap_or(false),
        max_word_chars: max_word_chars.unwrap_or(DEFAULT_MAX_WORD_CHARS),
    }
}

fn load_vocab(run: &mut Run, path: &Path) -> Result<SubwordVocabulary> {
    let bytes = run.read(path)?;
    SubwordVocabulary::read(bytes.as_slice()).with_context(|| format!("loading {}", path.display()))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct SourceEntry {
    path: PathBuf,
    encoding: Option<String>,
    source: Option<String>,
    doc_delimiter: Option<String>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct PreprocessArgs {
    /// Raw source file; repeatable. `.gz` files are decompressed.
    #[arg(long)]
    input: Option<Vec<PathBuf>>,
    /// utf-8 or latin-1, applied to every --input.
    #[arg(long)]
    encoding: Option<String>,
    /// news, wiki or other, applied to every --input.
    #[arg(long)]
    source: Option<String>,
    /// Regex; matching lines start a new document.
    #[arg(long)]
    doc_delimiter: Option<String>,
    /// One abbreviation per line; these never end a sentence.
    #[arg(long)]
    abbreviations: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Corpus statistics JSON (default: standard output).
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Per-source settings; config file only.
    #[arg(skip)]
    sources: Option<Vec<SourceEntry>>,
}

fn preprocess(args: PreprocessArgs) -> Result<()> {
    let output = required(&args.output, "output")?.clone();
    let mut sources = args.sources.clone().unwrap_or_default();
    for path in args.input.iter().flatten() {
        sources.push(SourceEntry {
            path: path.clone(),
            ..Default::default()
        });
    }
    if sources.is_empty() {
        return Err(usage(
            "missing --input (or [[preprocess.sources]] in the config)",
        ));
    }
    for s in &mut sources {
        s.encoding = s
            .encoding
            .take()
            .or(args.encoding.clone())
            .or(Some("utf-8".into()));
        s.source = s
            .source
            .take()
            .or(args.source.clone())
            .or(Some("other".into()));
        s.doc_delimiter = s.doc_delimiter.take().or(args.doc_delimiter.clone());
    }
    let settings = PreprocessArgs {
        sources: Some(sources.clone()),
        input: None,
        ..args
    };
    let mut run = Run::new("preprocess", &settings)?;
    let segmenter = match &settings.abbreviations {
        Some(p) => RuleSegmenter::from_reader(run.read(p)?.as_slice())?,
        None => RuleSegmenter::default(),
    };
    let mut documents = Vec::new();
    for s in &sources {
        let encoding: Encoding = s.encoding.as_deref().unwrap_or_default().parse()?;
        let source: Source = s.source.as_deref().unwrap_or_default().parse()?;
        let document_delimiter = s
            .doc_delimiter
            .as_deref()
            .map(Regex::new)
            .transpose()
            .map_err(|e| usage(format!("bad --doc-delimiter: {e}")))?;
        let raw = run.read(&s.path)?;
        let text = normalize_document(&raw, encoding)
            .with_context(|| format!("decoding {}", s.path.display()))?;
        let layout = SourceLayout {
            source,
            document_delimiter,
        };
        let id = s.path.display().to_string();
        documents.extend(build_documents(&text, &id, &layout, &segmenter));
    }
    let mut corpus = Vec::new();
    let stats: CorpusStats = emit_training_corpus(&documents, &mut corpus)?;
    run.write(&output, &corpus)?;
    emit(&mut run, settings.stats.as_ref(), &to_json_line(&stats)?)?;
    run.finish()
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct VocabTrainArgs {
    /// Training corpus, one sentence per line.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Model TSV (piece, log-probability).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    target_size: Option<usize>,
    #[arg(long)]
    seed_multiplier: Option<usize>,
    #[arg(long)]
    prune_fraction: Option<f64>,
    #[arg(long)]
    character_coverage: Option<f64>,
    #[arg(long)]
    em_iterations: Option<usize>,
    #[arg(long)]
    max_piece_chars: Option<usize>,
    /// Training trace JSON (sizes and log-likelihoods per round).
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn vocab_train(mut args: VocabTrainArgs) -> Result<()> {
    let d = UnigramTrainer::default();
    let trainer = UnigramTrainer {
        target_size: *args.target_size.get_or_insert(d.target_size),
        seed_multiplier: *args.seed_multiplier.get_or_insert(d.seed_multiplier),
        prune_fraction: *args.prune_fraction.get_or_insert(d.prune_fraction),
        character_coverage: *args.character_coverage.get_or_insert(d.character_coverage),
        em_iterations: *args.em_iterations.get_or_insert(d.em_iterations),
        max_piece_chars: *args.max_piece_chars.get_or_insert(d.max_piece_chars),
    };
    let input = required(&args.input, "input")?;
    let output = required(&args.output, "output")?;
    let mut run = Run::new("vocab-train", &args)?;
    let text = run.read_text(input)?;
    let (model, trace) = trainer.train(text.lines())?;
    let mut tsv = Vec::new();
    model.write_tsv(&mut tsv)?;
    run.write(output, &tsv)?;
    if let Some(p) = &args.trace {
        run.write(p, &to_json_line(&trace)?)?;
    }
    run.finish()
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct VocabConvertArgs {
    /// Unigram model TSV.
    #[arg(long)]
    model: Option<PathBuf>,
    /// WordPiece vocabulary, one entry per line.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Total entries including specials and unused slots.
    #[arg(long)]
    size: Option<usize>,
}

fn vocab_convert(mut args: VocabConvertArgs) -> Result<()> {
    let size = *args.size.get_or_insert(30_000);
    let model_path = required(&args.model, "model")?;
    let output = required(&args.output, "output")?;
    let mut run = Run::new("vocab-convert", &args)?;
    let model = UnigramModel::<f64>::read_tsv(run.read(model_path)?.as_slice())?;
    let vocab = to_wordpiece(&model, size)?;
    let mut bytes = Vec::new();
    vocab.write(&mut bytes)?;
    run.write(output, &bytes)?;
    run.finish()
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct FreqVocabArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Number of words before the specials.
    #[arg(long)]
    size: Option<usize>,
}

fn freq_vocab(mut args: FreqVocabArgs) -> Result<()> {
    let size = *args.size.get_or_insert(30_000);
    let input = required(&args.input, "input")?;
    let output = required(&args.output, "output")?;
    let mut run = Run::new("freq-vocab", &args)?;
    let text = run.read_text(input)?;
    let vocab = build_frequency_vocab(text.split_whitespace(), size)?;
    let mut bytes = Vec::new();
    vocab.write(&mut bytes)?;
    run.write(output, &bytes)?;
    run.finish()
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct TokenizeArgs {
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Text to tokenize (default: standard input).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Default: standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    split_punct: Option<bool>,
    /// Emit one JSON object per line with word alignment.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    align: Option<bool>,
    #[arg(long)]
    max_word_chars: Option<usize>,
}

fn tokenize(mut args: TokenizeArgs) -> Result<()> {
    let options = tokenizer_options(args.split_punct, args.max_word_chars);
    args.split_punct = Some(options.split_punctuation);
    args.max_word_chars = Some(options.max_word_chars);
    let align = *args.align.get_or_insert(false);
    let vocab_path = required(&args.vocab, "vocab")?;
    let mut run = Run::new("tokenize", &args)?;
    let vocab = load_vocab(&mut run, vocab_path)?;
    let text = match &args.input {
        Some(p) => run.read_text(p)?,
        None => {
            let mut s = String::new();
            io::stdin().lock().read_to_string(&mut s)?;
            s
        }
    };
    let mut out = Vec::new();
    for line in text.lines() {
        let result = tokenize_sentence(&vocab, line, &options);
        if align {
            serde_json::to_writer(&mut out, &result)?;
        } else {
            out.extend_from_slice(result.pieces.join(" ").as_bytes());
        }
        out.push(b'\n');
    }
    emit(&mut run, args.output.as_ref(), &out)?;
    run.finish()
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct AnalyzeArgs {
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Second vocabulary to compare against.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Sentences, one per line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Report JSON (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    split_punct: Option<bool>,
    #[arg(long)]
    max_word_chars: Option<usize>,
}

fn analyze(mut args: AnalyzeArgs) -> Result<()> {
    let options = tokenizer_options(args.split_punct, args.max_word_chars);
    args.split_punct = Some(options.split_punctuation);
    args.max_word_chars = Some(options.max_word_chars);
    let vocab_path = required(&args.vocab, "vocab")?;
    let corpus_path = required(&args.corpus, "corpus")?;
    let mut run = Run::new("analyze", &args)?;
    let vocab = load_vocab(&mut run, vocab_path)?;
    let text = run.read_text(corpus_path)?;
    let sentences: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let bytes = match &args.compare {
        Some(p) => {
            let other = load_vocab(&mut run, p)?;
            to_json_line(&compare_vocabs(&vocab, &other, &sentences, &options))?
        }
        None => to_json_line(&fertility(&vocab, &sentences, &options))?,
    };
    emit(&mut run, args.output.as_ref(), &bytes)?;
    run.finish()
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct PretrainDataArgs {
    /// Corpus in training format (blank line between documents).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// jsonl or binary.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    max_seq_len: Option<usize>,
    #[arg(long)]
    p_next: Option<f64>,
    #[arg(long)]
    mask_prob: Option<f64>,
    #[arg(long)]
    replace_mask: Option<f64>,
    #[arg(long)]
    replace_random: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Document-aligned shards, each with its own random stream.
    #[arg(long)]
    shards: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    split_punct: Option<bool>,
}

fn pretrain_data(mut args: PretrainDataArgs) -> Result<()> {
    let d = InstanceConfig::default();
    let config = InstanceConfig {
        max_seq_len: *args.max_seq_len.get_or_insert(d.max_seq_len),
        p_next: *args.p_next.get_or_insert(d.p_next),
        masking: MaskingConfig {
            mask_prob: *args.mask_prob.get_or_insert(d.masking.mask_prob),
            replace_mask: *args.replace_mask.get_or_insert(d.masking.replace_mask),
            replace_random: *args.replace_random.get_or_insert(d.masking.replace_random),
        },
        seed: *args.seed.get_or_insert(d.seed),
        shards: *args.shards.get_or_insert(d.shards),
        tokenizer: tokenizer_options(args.split_punct, None),
    };
    args.split_punct = Some(config.tokenizer.split_punctuation);
    let format = args.format.get_or_insert_with(|| "jsonl".into()).clone();
    if format != "jsonl" && format != "binary" {
        return Err(usage(format!(
            "--format must be jsonl or binary, got `{format}`"
        )));
    }
    let input = required(&args.input, "input")?;
    let vocab_path = required(&args.vocab, "vocab")?;
    let output = required(&args.output, "output")?;
    let mut run = Run::new("pretrain-data", &args)?;
    run.seed("seed", config.seed);
    let vocab = load_vocab(&mut run, vocab_path)?;
    let blocks = read_blocks(run.read(input)?.as_slice())?;
    let instances = generate_instances(&blocks, &vocab, &config)?;
    let mut bytes = Vec::new();
    if format == "binary" {
        write_binary(&instances, &mut bytes)?;
    } else {
        write_jsonl(&instances, &mut bytes)?;
    }
    run.write(output, &bytes)?;
    log::info!("{} instances from {} blocks", instances.len(), blocks.len());
    run.finish()
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct ScheduleArgs {
    /// Training sentences per epoch.
    #[arg(long)]
    sentences: Option<u64>,
    /// Batch size per device.
    #[arg(long)]
    batch: Option<u64>,
    #[arg(long)]
    devices: Option<u64>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    max_seq_len: Option<u64>,
    /// Also report the follow-up phase quota: exposure / this value.
    #[arg(long)]
    phase2_denominator: Option<u64>,
    /// Schedule JSON file (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct ScheduleOutput {
    #[serde(flatten)]
    schedule: Schedule,
    #[serde(skip_serializing_if = "Option::is_none")]
    phase2_quota: Option<u64>,
    /// To the nearest million.
    #[serde(skip_serializing_if = "Option::is_none")]
    phase2_quota_rounded: Option<u64>,
}

fn schedule(mut args: ScheduleArgs) -> Result<()> {
    let epochs = *args.epochs.get_or_insert(1);
    let max_seq_len = *args.max_seq_len.get_or_insert(128);
    let sentences = *required(&args.sentences, "sentences")?;
    let batch = *required(&args.batch, "batch")?;
    let devices = *required(&args.devices, "devices")?;
    let mut run = Run::new("schedule", &args)?;
    let schedule = compute_schedule(sentences, batch, devices, epochs, max_seq_len)?;
    let phase2 = args
        .phase2_denominator
        .map(|d| phase2_quota(&schedule, d))
        .transpose()?;
    eprint!("{}", schedule.render_table());
    if let Some(q) = phase2 {
        eprintln!(
            "phase-2 quota  {} (~{})",
            group_digits(q),
            group_digits(round_to(q, 1_000_000))
        );
    }
    let out = ScheduleOutput {
        schedule,
        phase2_quota: phase2,
        phase2_quota_rounded: phase2.map(|q| round_to(q, 1_000_000)),
    };
    emit(&mut run, args.output.as_ref(), &to_json_line(&out)?)?;
    run.finish()
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct ValidateSplitsArgs {
    /// Row of the built-in table, e.g. pos-bokmaal or negation.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// conllu or jsonl (default: from the file extension).
    #[arg(long)]
    format: Option<String>,
    /// Expected counts `TRAIN,DEV,TEST`, overriding the built-in row.
    #[arg(long)]
    expected: Option<String>,
    /// Report JSON (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the built-in table and exit.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    list: Option<bool>,
}

fn count_sentences(bytes: &[u8], path: &Path, format: Option<&str>) -> Result<u64> {
    let name = path.to_string_lossy();
    let name = name.strip_suffix(".gz").unwrap_or(&name);
    let format = match format {
        Some(f) => f.to_string(),
        None if name.ends_with(".conllu") => "conllu".into(),
        None if name.ends_with(".jsonl") || name.ends_with(".json") => "jsonl".into(),
        None => {
            return Err(usage(format!(
                "cannot tell the format of {}; pass --format",
                path.display()
            )))
        }
    };
    match format.as_str() {
        "conllu" => Ok(read_conllu(bytes)
            .with_context(|| format!("parsing {}", path.display()))?
            .len() as u64),
        "jsonl" => Ok(bytes
            .lines()
            .map_while(|l| l.ok())
            .filter(|l| !l.trim().is_empty())
            .count() as u64),
        other => Err(usage(format!(
            "--format must be conllu or jsonl, got `{other}`"
        ))),
    }
}

fn parse_expected(task: &str, text: &str) -> Result<SplitSpec> {
    let parts: Vec<u64> = text
        .split(',')
        .map(|p| p.trim().replace('_', "").parse())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--expected must be TRAIN,DEV,TEST, got `{text}`")))?;
    match parts[..] {
        [train, dev, test] => Ok(SplitSpec::new(task, train, dev, test)),
        _ => Err(usage(format!(
            "--expected must be TRAIN,DEV,TEST, got `{text}`"
        ))),
    }
}

fn validate_splits_cmd(args: ValidateSplitsArgs) -> Result<()> {
    if args.list == Some(true) {
        print!("{}", String::from_utf8(to_json_line(&benchmark_splits())?)?);
        return Ok(());
    }
    let task = required(&args.task, "task")?;
    let spec = match &args.expected {
        Some(e) => parse_expected(task, e)?,
        None => find_split_spec(task).ok_or_else(|| {
            let known: Vec<String> = benchmark_splits().into_iter().map(|s| s.task).collect();
            usage(format!(
                "unknown task `{task}`; known: {} (or pass --expected)",
                known.join(", ")
            ))
        })?,
    };
    let mut run = Run::new("validate-splits", &args)?;
    let mut counts = SplitCounts::default();
    for (key, path, slot) in [
        ("train", &args.train, &mut counts.train),
        ("dev", &args.dev, &mut counts.dev),
        ("test", &args.test, &mut counts.test),
    ] {
        let path = required(path, key)?;
        let bytes = run.read(path)?;
        *slot = count_sentences(&bytes, path, args.format.as_deref())?;
    }
    let report = validate_splits(counts, &spec);
    emit(&mut run, args.output.as_ref(), &to_json_line(&report)?)?;
    run.finish()?;
    if !report.pass {
        bail!(CheckFailed(format!(
            "{} split sizes differ:\n  {}",
            report.task,
            report.diff().join("\n  ")
        )));
    }
    Ok(())
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct EvaluateArgs {
    /// pos, ner, sent, fgsa or neg.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Report JSON; the table then goes to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Graph matching for sf1/nsf1: greedy or optimal.
    #[arg(long)]
    matching: Option<String>,
}

fn evaluate(mut args: EvaluateArgs) -> Result<()> {
    let matching: Matching = args
        .matching
        .get_or_insert_with(|| "greedy".into())
        .parse()
        .map_err(usage)?;
    let task: Task = required(&args.task, "task")?.parse().map_err(usage)?;
    let gold = required(&args.gold, "gold")?;
    let pred = required(&args.pred, "pred")?;
    let mut run = Run::new("evaluate", &args)?;
    let gold_bytes = run.read(gold)?;
    let pred_bytes = run.read(pred)?;
    let report = evaluate_task(
        task,
        EvalInput::new(gold.display().to_string(), gold_bytes.as_slice()),
        EvalInput::new(pred.display().to_string(), pred_bytes.as_slice()),
        matching,
    )?;
    let json = to_json_line(&report)?;
    match &args.out {
        Some(p) => {
            run.write(p, &json)?;
            print!("{}", report.render_table());
        }
        None => {
            io::stdout().write_all(&json)?;
            eprint!("{}", report.render_table());
        }
    }
    run.finish()
}

fn dispatch(cli: Cli) -> Result<()> {
    let config = Config::load(cli.config.as_deref())?;
    let jobs = match cli.jobs {
        Some(0) => return Err(usage("--jobs must be at least 1")),
        Some(n) => Some(n),
        None => config.jobs()?,
    };
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::Preprocess(a) => preprocess(resolve(&a, &config, "preprocess")?),
        Command::VocabTrain(a) => vocab_train(resolve(&a, &config, "vocab-train")?),
        Command::VocabConvert(a) => vocab_convert(resolve(&a, &config, "vocab-convert")?),
        Command::FreqVocab(a) => freq_vocab(resolve(&a, &config, "freq-vocab")?),
        Command::Tokenize(a) => tokenize(resolve(&a, &config, "tokenize")?),
        Command::Analyze(a) => analyze(resolve(&a, &config, "analyze")?),
        Command::PretrainData(a) => pretrain_data(resolve(&a, &config, "pretrain-data")?),
        Command::Schedule(a) => schedule(resolve(&a, &config, "schedule")?),
        Command::ValidateSplits(a) => validate_splits_cmd(resolve(&a, &config, "validate-splits")?),
        Command::Evaluate(a) => evaluate(resolve(&a, &config, "evaluate")?),
    }
}

/// Runs the command line with the given arguments (program name first) and
/// returns the exit status: 0 success, 1 failure, 2 usage error.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
