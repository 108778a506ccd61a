//! Greedy longest-match WordPiece tokenization and vocabulary-fit analytics.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::vocab::{SubwordVocabulary, CONTINUATION_PREFIX, UNK};

pub const DEFAULT_MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenizeError {
    #[error("piece sequence starts with continuation piece `{0}`")]
    LeadingContinuation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizerOptions {
    /// Split punctuation off words before subword lookup.
    pub split_punctuation: bool,
    /// Longer words map to `[UNK]` without lookup.
    pub max_word_chars: usize,
}

impl Default for TokenizerOptions {
    fn default() -> Self {
        TokenizerOptions {
            split_punctuation: false,
            max_word_chars: DEFAULT_MAX_WORD_CHARS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TokenizationResult {
    pub pieces: Vec<String>,
    /// Source word index of each piece.
    pub word_alignment: Vec<usize>,
    pub contains_unknown: bool,
    pub num_words: usize,
}

/// Splits `word` greedily into the longest matching vocabulary entries,
/// using the plain form at the word start and the `##` form elsewhere. Any
/// dead end, or a word longer than `max_word_chars`, yields `[UNK]`.
pub fn wordpiece_tokenize(
    vocab: &SubwordVocabulary,
    word: &str,
    max_word_chars: usize,
) -> Vec<String> {
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let n = bounds.len() - 1;
    if n > max_word_chars {
        return vec![UNK.to_string()];
    }
    let mut pieces = Vec::new();
    let mut candidate = String::with_capacity(word.len() + CONTINUATION_PREFIX.len());
    let mut start = 0;
    while start < n {
        let mut found = None;
        for end in (start + 1..=n).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.push_str(&word[bounds[start]..bounds[end]]);
            if vocab.contains(&candidate) {
                found = Some(end);
                break;
            }
        }
        match found {
            Some(end) => {
                pieces.push(candidate.clone());
                start = end;
            }
            None => return vec![UNK.to_string()],
        }
    }
    pieces
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '«' | '»' | '…' | '–' | '—' | '„' | '“' | '”' | '‘' | '’' | '¡' | '¿' | '§'
        )
}

/// Whitespace split, optionally with every punctuation character as its own
/// word.
pub fn pre_tokenize(text: &str, split_punctuation: bool) -> Vec<&str> {
    let mut words = Vec::new();
    for chunk in text.split_whitespace() {
        if !split_punctuation {
            words.push(chunk);
            continue;
        }
        let mut start = 0;
        for (i, c) in chunk.char_indices() {
            if is_punctuation(c) {
                if start < i {
                    words.push(&chunk[start..i]);
                }
                words.push(&chunk[i..i + c.len_utf8()]);
                start = i + c.len_utf8();
            }
        }
        if start < chunk.len() {
            words.push(&chunk[start..]);
        }
    }
    words
}

pub fn tokenize_sentence(
    vocab: &SubwordVocabulary,
    text: &str,
    options: &TokenizerOptions,
) -> TokenizationResult {
    let words = pre_tokenize(text, options.split_punctuation);
    let mut result = TokenizationResult {
        num_words: words.len(),
        ..Default::default()
    };
    for (i, word) in words.iter().enumerate() {
        for piece in wordpiece_tokenize(vocab, word, options.max_word_chars) {
            result.contains_unknown |= piece == UNK;
            result.pieces.push(piece);
            result.word_alignment.push(i);
        }
    }
    result
}

/// Joins pieces back into text: `##` pieces fuse to their predecessor,
/// everything else is space-separated.
pub fn detokenize<S: AsRef<str>>(pieces: &[S]) -> Result<String, TokenizeError> {
    let mut out = String::new();
    for (i, piece) in pieces.iter().enumerate() {
        let piece = piece.as_ref();
        match piece.strip_prefix(CONTINUATION_PREFIX) {
            Some(_) if i == 0 => {
                return Err(TokenizeError::LeadingContinuation(piece.to_string()));
            }
            Some(rest) => out.push_str(rest),
            None => {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(piece);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FertilityReport {
    pub words: u64,
    pub pieces: u64,
    pub unknown_words: u64,
    pub intact_words: u64,
    /// Pieces per word.
    pub fertility: f64,
    /// Words kept as a single known piece.
    pub intact_word_fraction: f64,
    pub unknown_rate: f64,
}

impl FertilityReport {
    fn from_counts(words: u64, pieces: u64, unknown_words: u64, intact_words: u64) -> Self {
        let ratio = |n: u64| {
            if words == 0 {
                0.0
            } else {
                n as f64 / words as f64
            }
        };
        FertilityReport {
            words,
            pieces,
            unknown_words,
            intact_words,
            fertility: ratio(pieces),
            intact_word_fraction: ratio(intact_words),
            unknown_rate: ratio(unknown_words),
        }
    }

    /// Fertility in any scalar type; exact for rationals.
    pub fn fertility_as<S: Scalar>(&self) -> S {
        if self.words == 0 {
            S::zero()
        } else {
            S::from_ratio(self.pieces, self.words)
        }
    }
}

/// Per-sentence counts `(words, pieces, unknown words, intact words)`.
fn sentence_counts(
    vocab: &SubwordVocabulary,
    sentence: &str,
    options: &TokenizerOptions,
) -> (u64, u64, u64, u64) {
    let mut counts = (0, 0, 0, 0);
    for word in pre_tokenize(sentence, options.split_punctuation) {
        let pieces = wordpiece_tokenize(vocab, word, options.max_word_chars);
        counts.0 += 1;
        counts.1 += pieces.len() as u64;
        if pieces[0] == UNK {
            counts.2 += 1;
        } else if pieces.len() == 1 {
            counts.3 += 1;
        }
    }
    counts
}

fn per_sentence<S: AsRef<str> + Sync>(
    vocab: &SubwordVocabulary,
    corpus: &[S],
    options: &TokenizerOptions,
) -> Vec<(u64, u64, u64, u64)> {
    corpus
        .par_iter()
        .map(|s| sentence_counts(vocab, s.as_ref(), options))
        .collect()
}

fn aggregate(counts: &[(u64, u64, u64, u64)]) -> FertilityReport {
    let (w, p, u, i) = counts.iter().fold((0, 0, 0, 0), |acc, c| {
        (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2, acc.3 + c.3)
    });
    FertilityReport::from_counts(w, p, u, i)
}

pub fn fertility<S: AsRef<str> + Sync>(
    vocab: &SubwordVocabulary,
    corpus: &[S],
    options: &TokenizerOptions,
) -> FertilityReport {
    aggregate(&per_sentence(vocab, corpus, options))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LowerFertility {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VocabComparison {
    pub a: FertilityReport,
    pub b: FertilityReport,
    /// Pieces under `a` minus pieces under `b`, per sentence.
    pub per_sentence_delta: Vec<i64>,
    pub total_delta: i64,
    pub lower_fertility: LowerFertility,
}

pub fn compare_vocabs<S: AsRef<str> + Sync>(
    vocab_a: &SubwordVocabulary,
    vocab_b: &SubwordVocabulary,
    corpus: &[S],
    options: &TokenizerOptions,
) -> VocabComparison {
    let ca = per_sentence(vocab_a, corpus, options);
    let cb = per_sentence(vocab_b, corpus, options);
    let per_sentence_delta: Vec<i64> = ca
        .iter()
        .zip(&cb)
        .map(|(a, b)| a.1 as i64 - b.1 as i64)
        .collect();
    let (a, b) = (aggregate(&ca), aggregate(&cb));
    let lower_fertility = match a.pieces.cmp(&b.pieces) {
        std::cmp::Ordering::Less => LowerFertility::A,
        std::cmp::Ordering::Greater => LowerFertility::B,
        std::cmp::Ordering::Equal => LowerFertility::Tie,
    };
    VocabComparison {
        a,
        b,
        total_delta: per_sentence_delta.iter().sum(),
        per_sentence_delta,
        lower_fertility,
    }
}
