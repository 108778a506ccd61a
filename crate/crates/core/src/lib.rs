//! Corpus preparation, subword vocabularies, pretraining data and
//! benchmark evaluation for Norwegian language models.

pub mod cli;
pub mod corpus;
pub mod metrics;
pub mod pretrain;
pub mod scalar;
pub mod tasks;
pub mod tokenizer;
pub mod vocab;

pub use scalar::Scalar;
