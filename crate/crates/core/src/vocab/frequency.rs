use std::collections::HashMap;
use std::io::Write;

use super::VocabError;

/// Appended after the counted words, in this order.
pub const WORD_VOCAB_SPECIALS: [&str; 3] = ["<S>", "</S>", "<UNK>"];

/// Most-frequent-word list for a word-level softmax.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordVocabulary {
    words: Vec<String>,
}

impl WordVocabulary {
    /// Counted words followed by the specials.
    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.words
            .iter()
            .map(String::as_str)
            .chain(WORD_VOCAB_SPECIALS)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len() + WORD_VOCAB_SPECIALS.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in self.entries() {
            writeln!(out, "{e}")?;
        }
        Ok(())
    }
}

/// Top `n` tokens by frequency, ties broken lexicographically.
///
/// Tokens equal to one of the specials are not counted. If fewer than `n`
/// distinct tokens exist the vocabulary is shorter and a warning is logged.
pub fn build_frequency_vocab<I, S>(tokens: I, n: usize) -> Result<WordVocabulary, VocabError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if n == 0 {
        return Err(VocabError::EmptyRequest);
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for t in tokens {
        let t = t.as_ref();
        if WORD_VOCAB_SPECIALS.contains(&t) {
            continue;
        }
        match counts.get_mut(t) {
            Some(c) => *c += 1,
            None => {
                counts.insert(t.to_string(), 1);
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if ranked.len() < n {
        log::warn!(
            "corpus has {} distinct words, fewer than the requested {n}",
            ranked.len()
        );
    }
    ranked.truncate(n);
    Ok(WordVocabulary {
        words: ranked.into_iter().map(|(w, _)| w).collect(),
    })
}
