use std::collections::HashMap;
use std::io::{BufRead, Write};

use num_traits::Float;

use super::unigram::UnigramModel;
use super::VocabError;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

/// Fixed head of every converted vocabulary, at ids 0 to 4.
pub const SPECIAL_TOKENS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

pub const CONTINUATION_PREFIX: &str = "##";

/// WordPiece inventory: entry index is the token id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordVocabulary {
    entries: Vec<String>,
    index: HashMap<String, u32>,
}

fn is_unused_slot(entry: &str) -> bool {
    entry
        .strip_prefix("[unused")
        .and_then(|r| r.strip_suffix(']'))
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

impl SubwordVocabulary {
    pub fn from_entries<I, S>(entries: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries: Vec<String> = entries.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.clone(), i as u32).is_some() {
                return Err(VocabError::DuplicateEntry {
                    entry: e.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(SubwordVocabulary { entries, index })
    }

    /// Reads the `vocab.txt` layout: one entry per line, line number = id.
    pub fn read(reader: impl BufRead) -> Result<Self, VocabError> {
        let entries = reader.lines().collect::<Result<Vec<_>, _>>()?;
        Self::from_entries(entries)
    }

    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.entries {
            out.write_all(e.as_bytes())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn id(&self, entry: &str) -> Option<u32> {
        self.index.get(entry).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, entry: &str) -> bool {
        self.index.contains_key(entry)
    }

    pub fn is_special(entry: &str) -> bool {
        SPECIAL_TOKENS.contains(&entry) || is_unused_slot(entry)
    }

    /// Ids of real pieces, i.e. everything except specials and unused slots.
    pub fn piece_ids(&self) -> Vec<u32> {
        (0..self.entries.len() as u32)
            .filter(|&i| !Self::is_special(&self.entries[i as usize]))
            .collect()
    }

    pub fn unused_slots(&self) -> usize {
        self.entries.iter().filter(|e| is_unused_slot(e)).count()
    }

    /// True when the five specials sit at ids 0 to 4 in the canonical order.
    pub fn has_standard_head(&self) -> bool {
        self.entries.len() >= SPECIAL_TOKENS.len()
            && SPECIAL_TOKENS
                .iter()
                .zip(&self.entries)
                .all(|(s, e)| s == e)
    }
}

/// Vocabulary entry for a unigram piece: word-initial pieces lose the
/// boundary marker, all others get the `##` prefix. A bare marker has no
/// WordPiece counterpart.
pub fn wordpiece_surface(piece: &str, marker: char) -> Option<String> {
    match piece.strip_prefix(marker) {
        Some("") => None,
        Some(rest) => Some(rest.to_string()),
        None => Some(format!("{CONTINUATION_PREFIX}{piece}")),
    }
}

/// Renders a unigram model in BERT WordPiece layout.
///
/// Specials occupy ids 0 to 4, followed by the model's pieces in descending
/// probability, then `[unused0]`, `[unused1]`, ... up to `target_size`. When
/// two pieces render to the same surface form the more probable one keeps
/// it; surfaces that would shadow a special are dropped.
pub fn to_wordpiece<F: Float>(
    model: &UnigramModel<F>,
    target_size: usize,
) -> Result<SubwordVocabulary, VocabError> {
    let marker = model.boundary_marker();
    let mut entries: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    let mut seen: std::collections::HashSet<String> = entries.iter().cloned().collect();
    for (piece, _) in model.pieces() {
        let Some(surface) = wordpiece_surface(piece, marker) else {
            continue;
        };
        if SubwordVocabulary::is_special(&surface) {
            continue;
        }
        if seen.insert(surface.clone()) {
            entries.push(surface);
        }
    }
    if entries.len() > target_size {
        return Err(VocabError::TargetTooSmall {
            target: target_size,
            required: entries.len(),
        });
    }
    let unused = target_size - entries.len();
    entries.extend((0..unused).map(|i| format!("[unused{i}]")));
    SubwordVocabulary::from_entries(entries)
}
