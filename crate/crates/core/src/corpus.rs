//! Raw source normalization, sentence segmentation and the training-corpus
//! line format (one sentence per line, one blank line between blocks).

use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid {encoding} byte sequence at offset {offset}")]
    Decode { encoding: Encoding, offset: usize },
    #[error("unsupported encoding `{0}` (expected utf-8 or latin-1)")]
    UnknownEncoding(String),
    #[error("unknown source kind `{0}` (expected news, wiki or other)")]
    UnknownSource(String),
    #[error("document {doc_id}: sentence contains a line break")]
    SentenceWithNewline { doc_id: String },
    #[error("writing document {doc_id}: {source}")]
    Write {
        doc_id: String,
        #[source]
        source: io::Error,
    },
    #[error("reading corpus: {0}")]
    Read(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    Utf8,
    Latin1,
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Encoding::Utf8 => f.write_str("UTF-8"),
            Encoding::Latin1 => f.write_str("Latin-1"),
        }
    }
}

impl FromStr for Encoding {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "utf-8" | "utf8" => Ok(Encoding::Utf8),
            "latin-1" | "latin1" | "iso-8859-1" | "iso8859-1" => Ok(Encoding::Latin1),
            _ => Err(CorpusError::UnknownEncoding(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    News,
    Wiki,
    Other,
}

impl FromStr for Source {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "news" => Ok(Source::News),
            "wiki" | "wikipedia" => Ok(Source::Wiki),
            "other" => Ok(Source::Other),
            _ => Err(CorpusError::UnknownSource(s.to_string())),
        }
    }
}

pub type Sentence = String;
pub type Section = Vec<Sentence>;

/// A sentence-segmented document. Sections are separated by blank lines in
/// the emitted corpus exactly like documents are.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub source: Source,
    pub sections: Vec<Section>,
}

impl Document {
    pub fn new(id: impl Into<String>, source: Source, sections: Vec<Section>) -> Self {
        Document {
            id: id.into(),
            source,
            sections,
        }
    }

    pub fn num_sentences(&self) -> usize {
        self.sections.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_documents: u64,
    pub num_sentences: u64,
    pub num_word_tokens: u64,
    pub num_characters: u64,
}

impl CorpusStats {
    fn add_sentence(&mut self, line: &str) {
        self.num_sentences += 1;
        self.num_word_tokens += line.split_whitespace().count() as u64;
        self.num_characters += line.chars().count() as u64;
    }
}

impl std::ops::AddAssign for CorpusStats {
    fn add_assign(&mut self, rhs: Self) {
        self.num_documents += rhs.num_documents;
        self.num_sentences += rhs.num_sentences;
        self.num_word_tokens += rhs.num_word_tokens;
        self.num_characters += rhs.num_characters;
    }
}

/// Decodes `raw` under `encoding` and applies [`detokenize`].
pub fn normalize_document(raw: &[u8], encoding: Encoding) -> Result<String, CorpusError> {
    let text = decode(raw, encoding)?;
    Ok(detokenize(&text))
}

pub fn decode(raw: &[u8], encoding: Encoding) -> Result<String, CorpusError> {
    match encoding {
        Encoding::Utf8 => match std::str::from_utf8(raw) {
            Ok(s) => Ok(s.to_string()),
            Err(e) => Err(CorpusError::Decode {
                encoding,
                offset: e.valid_up_to(),
            }),
        },
        // Latin-1 code points coincide with the first 256 Unicode scalars.
        Encoding::Latin1 => Ok(raw.iter().map(|&b| char::from(b)).collect()),
    }
}

const NO_SPACE_BEFORE: &[char] = &['.', ',', ':', ';', '!', '?', ')'];
const NO_SPACE_AFTER: &[char] = &['('];

/// Undoes newswire tokenization line by line.
///
/// Horizontal whitespace runs collapse to one space, spaces before
/// `. , : ; ! ? )` and after `(` are dropped, and lines are trimmed. Line
/// structure is kept (CRLF becomes LF). The function is idempotent.
pub fn detokenize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        detokenize_line(line.strip_suffix('\r').unwrap_or(line), &mut out);
    }
    out
}

fn detokenize_line(line: &str, out: &mut String) {
    let start = out.len();
    let mut pending_space = false;
    for c in line.chars() {
        if c.is_whitespace() {
            pending_space = true;
            continue;
        }
        let at_start = out.len() == start;
        let after_open = out[start..].ends_with(NO_SPACE_AFTER);
        if pending_space && !at_start && !after_open && !NO_SPACE_BEFORE.contains(&c) {
            out.push(' ');
        }
        pending_space = false;
        out.push(c);
    }
}

/// Splits running text into sentences.
pub trait SentenceSegmenter: Send + Sync {
    fn segment(&self, text: &str) -> Vec<Sentence>;
}

/// Terminator-based segmenter with an abbreviation list.
///
/// A boundary follows any whitespace token whose last character (ignoring
/// closing quotes and brackets) is one of `. ! ? …`, unless the token is a
/// listed abbreviation.
#[derive(Debug, Clone, Default)]
pub struct RuleSegmenter {
    abbreviations: HashSet<String>,
}

const TERMINATORS: &[char] = &['.', '!', '?', '…'];
const CLOSERS: &[char] = &['"', '\'', '»', '”', '’', ')', ']'];

impl RuleSegmenter {
    pub fn new<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        RuleSegmenter {
            abbreviations: abbreviations.into_iter().map(Into::into).collect(),
        }
    }

    /// Reads one abbreviation per line; blank lines and `#` comments skipped.
    pub fn from_reader(reader: impl BufRead) -> io::Result<Self> {
        let mut abbreviations = HashSet::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                abbreviations.insert(line.to_string());
            }
        }
        Ok(RuleSegmenter { abbreviations })
    }

    fn ends_sentence(&self, token: &str) -> bool {
        let core = token.trim_end_matches(CLOSERS);
        core.ends_with(TERMINATORS) && !self.abbreviations.contains(token)
    }
}

impl SentenceSegmenter for RuleSegmenter {
    fn segment(&self, text: &str) -> Vec<Sentence> {
        let mut sentences = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for token in text.split_whitespace() {
            current.push(token);
            if self.ends_sentence(token) {
                sentences.push(current.join(" "));
                current.clear();
            }
        }
        if !current.is_empty() {
            sentences.push(current.join(" "));
        }
        sentences
    }
}

/// Convenience wrapper over [`RuleSegmenter`].
pub fn segment_sentences(text: &str, abbreviations: &HashSet<String>) -> Vec<Sentence> {
    RuleSegmenter {
        abbreviations: abbreviations.clone(),
    }
    .segment(text)
}

/// How a normalized source file is cut into documents and sections.
#[derive(Debug, Clone)]
pub struct SourceLayout {
    pub source: Source,
    /// Lines matching this pattern start a new document. Without it the
    /// whole file is one document.
    pub document_delimiter: Option<Regex>,
}

/// Builds documents from normalized source text.
///
/// Blank lines separate paragraphs. For Wikipedia sources every paragraph is
/// its own section; other sources keep a document's paragraphs in a single
/// section. Empty documents are dropped.
pub fn build_documents(
    text: &str,
    id_prefix: &str,
    layout: &SourceLayout,
    segmenter: &dyn SentenceSegmenter,
) -> Vec<Document> {
    let mut raw_docs: Vec<Vec<&str>> = vec![Vec::new()];
    for line in text.lines() {
        if let Some(re) = &layout.document_delimiter {
            if re.is_match(line) {
                raw_docs.push(Vec::new());
                continue;
            }
        }
        raw_docs.last_mut().unwrap().push(line);
    }

    raw_docs
        .par_iter()
        .map(|lines| {
            let mut sections: Vec<Section> = Vec::new();
            let mut current: Section = Vec::new();
            for paragraph in lines.split(|l| l.trim().is_empty()) {
                if paragraph.is_empty() {
                    continue;
                }
                let sentences = segmenter.segment(&paragraph.join(" "));
                if sentences.is_empty() {
                    continue;
                }
                if layout.source == Source::Wiki {
                    sections.push(sentences);
                } else {
                    current.extend(sentences);
                }
            }
            if !current.is_empty() {
                sections.push(current);
            }
            sections
        })
        .collect::<Vec<_>>()
        .into_iter()
        .filter(|sections| !sections.is_empty())
        .enumerate()
        .map(|(i, sections)| Document::new(format!("{id_prefix}#{i}"), layout.source, sections))
        .collect()
}

/// Writes documents in the training-corpus format and returns the stats of
/// what was written.
///
/// Whitespace-only sentences and empty sections are skipped, so no stray
/// blank lines appear. `num_documents` counts emitted blank-line-delimited
/// blocks: a multi-section document contributes one block per section, which
/// is what [`corpus_stats`] sees when reading the output back.
pub fn emit_training_corpus<'a, I, W>(docs: I, sink: &mut W) -> Result<CorpusStats, CorpusError>
where
    I: IntoIterator<Item = &'a Document>,
    W: Write + ?Sized,
{
    let mut stats = CorpusStats::default();
    for doc in docs {
        for section in &doc.sections {
            let sentences: Vec<&str> = section
                .iter()
                .map(String::as_str)
                .filter(|s| !s.trim().is_empty())
                .collect();
            if sentences.is_empty() {
                continue;
            }
            if sentences.iter().any(|s| s.contains(['\n', '\r'])) {
                return Err(CorpusError::SentenceWithNewline {
                    doc_id: doc.id.clone(),
                });
            }
            let write_err = |source| CorpusError::Write {
                doc_id: doc.id.clone(),
                source,
            };
            if stats.num_documents > 0 {
                sink.write_all(b"\n").map_err(write_err)?;
            }
            for s in sentences {
                sink.write_all(s.as_bytes()).map_err(write_err)?;
                sink.write_all(b"\n").map_err(write_err)?;
                stats.add_sentence(s);
            }
            stats.num_documents += 1;
        }
    }
    Ok(stats)
}

/// Counts documents, sentences, whitespace tokens and characters of a corpus
/// in the training format.
pub fn corpus_stats(reader: impl BufRead) -> Result<CorpusStats, CorpusError> {
    let mut stats = CorpusStats::default();
    let mut in_block = false;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            in_block = false;
            continue;
        }
        if !in_block {
            stats.num_documents += 1;
            in_block = true;
        }
        stats.add_sentence(&line);
    }
    Ok(stats)
}

/// Reads a training-format corpus back into blocks of sentences.
pub fn read_blocks(reader: impl BufRead) -> Result<Vec<Vec<String>>, CorpusError> {
    let mut blocks: Vec<Vec<String>> = Vec::new();
    let mut current = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    Ok(blocks)
}
