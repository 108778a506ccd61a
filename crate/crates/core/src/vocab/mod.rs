//! Vocabulary induction: unigram-LM subword models, their WordPiece
//! rendering, and frequency word lists.

mod frequency;
mod lattice;
mod unigram;
mod wordpiece;

pub use frequency::{build_frequency_vocab, WordVocabulary, WORD_VOCAB_SPECIALS};
pub use lattice::viterbi;
pub use unigram::{
    train_unigram, RoundTrace, TrainingTrace, UnigramModel, UnigramTrainer, Unsegmentable,
    BOUNDARY_MARKER,
};
pub use wordpiece::{
    to_wordpiece, wordpiece_surface, SubwordVocabulary, CLS, CONTINUATION_PREFIX, MASK, PAD, SEP,
    SPECIAL_TOKENS, UNK,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("target size {target} is below the alphabet size {alphabet}")]
    TargetBelowAlphabet { target: usize, alphabet: usize },
    #[error("only {available} candidate pieces exist, cannot reach target size {target}")]
    NotEnoughCandidates { available: usize, target: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid trainer setting: {0}")]
    InvalidSetting(String),
    #[error("vocabulary size {target} cannot hold {required} entries")]
    TargetTooSmall { target: usize, required: usize },
    #[error("duplicate vocabulary entry `{entry}` at line {line}")]
    DuplicateEntry { entry: String, line: usize },
    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },
    #[error("frequency vocabulary size must be at least 1")]
    EmptyRequest,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
