//! Unigram language-model subword induction.
//!
//! Training follows the usual recipe: seed a large candidate inventory from
//! frequent substrings, fit piece probabilities with EM over each word's
//! segmentation lattice, then repeatedly drop the pieces whose removal costs
//! the least likelihood until the target size is reached.

use std::collections::HashMap;
use std::fmt::Display;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_traits::Float;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::lattice::viterbi;
use super::VocabError;

/// Prepended to every word before training; marks word-initial pieces.
pub const BOUNDARY_MARKER: char = '▁';

/// Fixed number of reduction buckets for the parallel E-step.
const EM_BUCKETS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no segmentation of `{text}`: character `{character}` has no piece")]
pub struct Unsegmentable {
    pub text: String,
    pub character: char,
}

/// Piece inventory with log-probabilities, ordered by descending probability
/// (ties by piece string).
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramModel<F = f64> {
    pieces: Vec<(String, F)>,
    index: HashMap<String, usize>,
    max_piece_chars: usize,
    boundary_marker: char,
}

impl<F: Float> UnigramModel<F> {
    pub fn from_pieces<I>(pieces: I) -> Self
    where
        I: IntoIterator<Item = (String, F)>,
    {
        let mut pieces: Vec<(String, F)> = pieces.into_iter().collect();
        pieces.sort_by(|(a, pa), (b, pb)| {
            pb.partial_cmp(pa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.cmp(b))
        });
        pieces.dedup_by(|a, b| a.0 == b.0);
        let index = pieces
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (p.clone(), i))
            .collect();
        let max_piece_chars = pieces
            .iter()
            .map(|(p, _)| p.chars().count())
            .max()
            .unwrap_or(1);
        UnigramModel {
            pieces,
            index,
            max_piece_chars,
            boundary_marker: BOUNDARY_MARKER,
        }
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn boundary_marker(&self) -> char {
        self.boundary_marker
    }

    pub fn pieces(&self) -> impl Iterator<Item = (&str, F)> {
        self.pieces.iter().map(|(p, lp)| (p.as_str(), *lp))
    }

    pub fn log_prob(&self, piece: &str) -> Option<F> {
        self.index.get(piece).map(|&i| self.pieces[i].1)
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.index.contains_key(piece)
    }

    /// Total probability mass, `Σ exp(log p)`.
    pub fn probability_mass(&self) -> F {
        self.pieces
            .iter()
            .fold(F::zero(), |acc, (_, lp)| acc + lp.exp())
    }

    /// Most probable segmentation of `text` exactly as given (no marker is
    /// added).
    pub fn segment(&self, text: &str) -> Result<Vec<String>, Unsegmentable> {
        self.segment_scored(text).map(|(pieces, _)| pieces)
    }

    /// Like [`segment`](Self::segment), also returning the summed
    /// log-probability.
    pub fn segment_scored(&self, text: &str) -> Result<(Vec<String>, F), Unsegmentable> {
        let result = viterbi(text, self.max_piece_chars, |s| {
            self.index.get(s).map(|&i| (i, self.pieces[i].1))
        });
        match result {
            Some((path, score)) => Ok((
                path.into_iter()
                    .map(|(_, range)| text[range].to_string())
                    .collect(),
                score,
            )),
            None => Err(Unsegmentable {
                text: text.to_string(),
                character: self.first_unreachable(text),
            }),
        }
    }

    /// Segments a raw word as it appears in running text, i.e. with the
    /// boundary marker prepended.
    pub fn segment_word(&self, word: &str) -> Result<Vec<String>, Unsegmentable> {
        self.segment(&format!("{}{word}", self.boundary_marker))
    }

    fn first_unreachable(&self, text: &str) -> char {
        text.chars()
            .find(|c| {
                let s = c.to_string();
                let marked = format!("{}{c}", self.boundary_marker);
                !self.contains(&s) && !self.contains(&marked)
            })
            .or_else(|| text.chars().next())
            .unwrap_or(self.boundary_marker)
    }
}

impl<F: Float + Display> UnigramModel<F> {
    /// Writes `piece<TAB>log-probability` lines in model order.
    pub fn write_tsv(&self, mut out: impl Write) -> std::io::Result<()> {
        for (piece, lp) in &self.pieces {
            writeln!(out, "{piece}\t{lp}")?;
        }
        Ok(())
    }
}

impl<F: Float + FromStr> UnigramModel<F> {
    pub fn read_tsv(reader: impl BufRead) -> Result<Self, VocabError> {
        let mut pieces = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fail = |message: &str| VocabError::ModelFormat {
                line: i + 1,
                message: message.to_string(),
            };
            let (piece, lp) = line
                .rsplit_once('\t')
                .ok_or_else(|| fail("expected piece<TAB>log-probability"))?;
            let lp = match lp {
                "-inf" => F::neg_infinity(),
                _ => lp.parse::<F>().map_err(|_| fail("bad log-probability"))?,
            };
            if piece.is_empty() {
                return Err(fail("empty piece"));
            }
            pieces.push((piece.to_string(), lp));
        }
        Ok(UnigramModel::from_pieces(pieces))
    }
}

/// Log-likelihood trajectory of one pruning round.
#[derive(Debug, Clone, Serialize)]
pub struct RoundTrace {
    pub pieces: usize,
    /// Corpus log-likelihood before the first EM iteration and after each one.
    pub log_likelihood: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainingTrace {
    pub rounds: Vec<RoundTrace>,
    pub alphabet_size: usize,
    pub seed_size: usize,
    pub dropped_words: u64,
}

#[derive(Debug, Clone)]
pub struct UnigramTrainer {
    pub target_size: usize,
    /// Seed inventory is `seed_multiplier × target_size` pieces.
    pub seed_multiplier: usize,
    /// Fraction of pieces removed per pruning round.
    pub prune_fraction: f64,
    /// Fraction of character occurrences the alphabet must cover.
    pub character_coverage: f64,
    pub em_iterations: usize,
    pub max_piece_chars: usize,
}

impl Default for UnigramTrainer {
    fn default() -> Self {
        UnigramTrainer {
            target_size: 24_000,
            seed_multiplier: 4,
            prune_fraction: 0.25,
            character_coverage: 0.9999,
            em_iterations: 2,
            max_piece_chars: 16,
        }
    }
}

/// Trains with default settings and the given target size.
pub fn train_unigram<I, S>(
    sentences: I,
    target_size: usize,
) -> Result<(UnigramModel, TrainingTrace), VocabError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    UnigramTrainer {
        target_size,
        ..Default::default()
    }
    .train(sentences)
}

/// Mutable piece table used during training.
struct Inventory {
    pieces: Vec<String>,
    log_probs: Vec<f64>,
    required: Vec<bool>,
    index: HashMap<String, usize>,
    max_chars: usize,
}

impl Inventory {
    fn new(pieces: Vec<String>, scores: Vec<f64>, required: Vec<bool>) -> Self {
        let index = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        let max_chars = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(1);
        let mut inv = Inventory {
            pieces,
            log_probs: scores,
            required,
            index,
            max_chars,
        };
        inv.normalize_with_floor();
        inv
    }

    fn len(&self) -> usize {
        self.pieces.len()
    }

    /// Turns raw non-negative scores (stored as log values) into a proper
    /// distribution. Pieces at zero probability get a small positive floor so
    /// that every piece is usable at the start of a round.
    fn normalize_with_floor(&mut self) {
        let min_finite = self
            .log_probs
            .iter()
            .copied()
            .filter(|lp| lp.is_finite())
            .fold(f64::INFINITY, f64::min);
        let floor = if min_finite.is_finite() {
            min_finite - 10f64.ln()
        } else {
            0.0
        };
        for lp in &mut self.log_probs {
            if !lp.is_finite() {
                *lp = floor;
            }
        }
        let z = log_sum_exp(&self.log_probs);
        for lp in &mut self.log_probs {
            *lp -= z;
        }
    }

    fn lookup(&self, s: &str) -> Option<(usize, f64)> {
        self.index.get(s).map(|&i| (i, self.log_probs[i]))
    }

    /// Forward-backward over one word's lattice. Adds `count`-weighted
    /// posterior piece counts into `expected` and returns the word's
    /// marginal log-likelihood.
    fn accumulate(&self, word: &str, count: f64, expected: &mut [f64]) -> f64 {
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let n = bounds.len() - 1;
        let mut edges: Vec<(usize, usize, usize, f64)> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..=(i + self.max_chars).min(n) {
                if let Some((id, lp)) = self.lookup(&word[bounds[i]..bounds[j]]) {
                    if lp.is_finite() {
                        edges.push((i, j, id, lp));
                    }
                }
            }
        }
        let mut alpha = vec![f64::NEG_INFINITY; n + 1];
        alpha[0] = 0.0;
        // Edges are sorted by start, so alpha[i] is final when reached.
        for &(i, j, _, lp) in &edges {
            alpha[j] = log_add(alpha[j], alpha[i] + lp);
        }
        let mut beta = vec![f64::NEG_INFINITY; n + 1];
        beta[n] = 0.0;
        for &(i, j, _, lp) in edges.iter().rev() {
            beta[i] = log_add(beta[i], beta[j] + lp);
        }
        let z = alpha[n];
        if !z.is_finite() {
            return 0.0;
        }
        for &(i, j, id, lp) in &edges {
            let posterior = (alpha[i] + lp + beta[j] - z).exp();
            expected[id] += count * posterior;
        }
        count * z
    }

    /// E-step over all words. Reduction runs over a fixed number of buckets
    /// in bucket order, so the result does not depend on thread scheduling.
    fn expectation(&self, words: &[(String, u64)]) -> (Vec<f64>, f64) {
        let chunk = words.len().div_ceil(EM_BUCKETS).max(1);
        let partials: Vec<(Vec<f64>, f64)> = words
            .par_chunks(chunk)
            .map(|bucket| {
                let mut expected = vec![0.0; self.len()];
                let mut ll = 0.0;
                for (word, count) in bucket {
                    ll += self.accumulate(word, *count as f64, &mut expected);
                }
                (expected, ll)
            })
            .collect();
        let mut expected = vec![0.0; self.len()];
        let mut ll = 0.0;
        for (part, part_ll) in partials {
            for (e, p) in expected.iter_mut().zip(part) {
                *e += p;
            }
            ll += part_ll;
        }
        (expected, ll)
    }

    fn maximization(&mut self, expected: &[f64]) {
        let total: f64 = expected.iter().sum();
        for (lp, &e) in self.log_probs.iter_mut().zip(expected) {
            *lp = if e > 0.0 {
                (e / total).ln()
            } else {
                f64::NEG_INFINITY
            };
        }
    }

    fn viterbi_ids(&self, text: &str, exclude: Option<usize>) -> Option<Vec<usize>> {
        viterbi(text, self.max_chars, |s| {
            self.lookup(s).filter(|(id, _)| Some(*id) != exclude)
        })
        .map(|(path, _)| path.into_iter().map(|(id, _)| id).collect())
    }

    /// Keeps the required pieces plus the non-required pieces whose removal
    /// would cost the most likelihood, for `keep` pieces in total.
    fn prune(&mut self, words: &[(String, u64)], keep: usize) {
        let mut freq = vec![0.0f64; self.len()];
        for (word, count) in words {
            if let Some(ids) = self.viterbi_ids(word, None) {
                for id in ids {
                    freq[id] += *count as f64;
                }
            }
        }
        let total: f64 = freq.iter().sum();
        let log_total = total.ln();

        let mut candidates: Vec<(usize, f64)> = Vec::new();
        for id in 0..self.len() {
            if self.required[id] {
                continue;
            }
            let f = freq[id];
            if f == 0.0 {
                candidates.push((id, f64::NEG_INFINITY));
                continue;
            }
            let loss = match self.viterbi_ids(&self.pieces[id], Some(id)) {
                None => f64::INFINITY,
                Some(alt) => {
                    // Likelihood change if every use of `id` is replaced by
                    // its best alternative segmentation.
                    let log_prob_piece = f.ln() - log_total;
                    let log_total_alt = (total + f * (alt.len() as f64 - 1.0)).ln();
                    let log_prob_alt: f64 = alt
                        .iter()
                        .map(|&a| (freq[a] + f).ln() - log_total_alt)
                        .sum();
                    (f / total) * (log_prob_piece - log_prob_alt)
                }
            };
            candidates.push((id, loss));
        }
        candidates.sort_by(|(a, la), (b, lb)| {
            lb.partial_cmp(la)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.pieces[*a].cmp(&self.pieces[*b]))
        });

        let n_required = self.required.iter().filter(|r| **r).count();
        let mut kept: Vec<usize> = (0..self.len()).filter(|&i| self.required[i]).collect();
        kept.extend(
            candidates
                .iter()
                .take(keep.saturating_sub(n_required))
                .map(|(id, _)| *id),
        );
        kept.sort_unstable();

        let pieces = kept.iter().map(|&i| self.pieces[i].clone()).collect();
        let scores = kept.iter().map(|&i| self.log_probs[i]).collect();
        let required = kept.iter().map(|&i| self.required[i]).collect();
        *self = Inventory::new(pieces, scores, required);
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, log_add)
}

impl UnigramTrainer {
    fn validate(&self) -> Result<(), VocabError> {
        let bad = |m: &str| Err(VocabError::InvalidSetting(m.to_string()));
        if self.target_size == 0 {
            return bad("target size must be positive");
        }
        if !(0.0..1.0).contains(&self.prune_fraction) || self.prune_fraction == 0.0 {
            return bad("prune fraction must lie in (0, 1)");
        }
        if !(self.character_coverage > 0.0 && self.character_coverage <= 1.0) {
            return bad("character coverage must lie in (0, 1]");
        }
        if self.seed_multiplier == 0 || self.max_piece_chars < 2 {
            return bad("seed multiplier must be >= 1 and max piece length >= 2");
        }
        Ok(())
    }

    pub fn train<I, S>(&self, sentences: I) -> Result<(UnigramModel, TrainingTrace), VocabError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.validate()?;
        let mut trace = TrainingTrace::default();

        let mut counts: HashMap<String, u64> = HashMap::new();
        for sentence in sentences {
            for word in sentence.as_ref().split_whitespace() {
                *counts
                    .entry(format!("{BOUNDARY_MARKER}{word}"))
                    .or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        let mut words: Vec<(String, u64)> = counts.into_iter().collect();
        words.sort_unstable();

        let alphabet = self.alphabet(&words);
        // Every covered character is required in both word-initial and
        // continuation form, which keeps any covered word segmentable.
        let required: Vec<String> = alphabet
            .iter()
            .flat_map(|(c, _)| [c.to_string(), format!("{BOUNDARY_MARKER}{c}")])
            .collect();
        trace.alphabet_size = required.len();
        if self.target_size < required.len() {
            return Err(VocabError::TargetBelowAlphabet {
                target: self.target_size,
                alphabet: required.len(),
            });
        }

        let covered: HashMap<char, u64> = alphabet.iter().copied().collect();
        let before = words.iter().map(|(_, c)| c).sum::<u64>();
        words.retain(|(w, _)| w.chars().skip(1).all(|c| covered.contains_key(&c)));
        trace.dropped_words = before - words.iter().map(|(_, c)| c).sum::<u64>();

        let mut inventory = self.seed(&words, &alphabet, &required);
        trace.seed_size = inventory.len();
        if inventory.len() < self.target_size {
            return Err(VocabError::NotEnoughCandidates {
                available: inventory.len(),
                target: self.target_size,
            });
        }

        loop {
            let mut round = RoundTrace {
                pieces: inventory.len(),
                log_likelihood: Vec::with_capacity(self.em_iterations + 1),
            };
            for _ in 0..self.em_iterations {
                let (expected, ll) = inventory.expectation(&words);
                round.log_likelihood.push(ll);
                inventory.maximization(&expected);
            }
            let (_, ll) = inventory.expectation(&words);
            round.log_likelihood.push(ll);
            log::debug!(
                "unigram round: {} pieces, log-likelihood {:?}",
                round.pieces,
                round.log_likelihood
            );
            trace.rounds.push(round);

            if inventory.len() <= self.target_size {
                break;
            }
            let shrunk = (inventory.len() as f64 * (1.0 - self.prune_fraction)).floor() as usize;
            let keep = shrunk.clamp(self.target_size, inventory.len() - 1);
            inventory.prune(&words, keep);
        }

        inventory.normalize_with_floor();
        let model =
            UnigramModel::from_pieces(inventory.pieces.into_iter().zip(inventory.log_probs));
        Ok((model, trace))
    }

    /// Characters ordered by descending frequency, truncated to the shortest
    /// prefix reaching the coverage threshold.
    fn alphabet(&self, words: &[(String, u64)]) -> Vec<(char, u64)> {
        let mut chars: HashMap<char, u64> = HashMap::new();
        for (w, count) in words {
            for c in w.chars().skip(1) {
                *chars.entry(c).or_default() += count;
            }
        }
        let mut chars: Vec<(char, u64)> = chars.into_iter().collect();
        chars.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let total: u64 = chars.iter().map(|(_, n)| n).sum();
        let mut covered = 0u64;
        let mut keep = 0;
        for (_, n) in &chars {
            if covered as f64 >= self.character_coverage * total as f64 {
                break;
            }
            covered += n;
            keep += 1;
        }
        chars.truncate(keep.max(1));
        chars
    }

    /// Required pieces plus the highest `frequency × length` substrings.
    fn seed(
        &self,
        words: &[(String, u64)],
        alphabet: &[(char, u64)],
        required: &[String],
    ) -> Inventory {
        let mut substrings: HashMap<&str, u64> = HashMap::new();
        for (word, count) in words {
            let bounds: Vec<usize> = word
                .char_indices()
                .map(|(i, _)| i)
                .chain(std::iter::once(word.len()))
                .collect();
            let n = bounds.len() - 1;
            for i in 0..n {
                for j in (i + 2)..=(i + self.max_piece_chars).min(n) {
                    if i == 0 && j == 2 {
                        continue;
                    }
                    *substrings.entry(&word[bounds[i]..bounds[j]]).or_default() += count;
                }
            }
        }
        let mut scored: Vec<(&str, u64)> = substrings
            .into_iter()
            .map(|(s, f)| (s, f * s.chars().count() as u64))
            .collect();
        scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let budget = (self.seed_multiplier * self.target_size).saturating_sub(required.len());
        scored.truncate(budget);

        let char_freq: HashMap<char, u64> = alphabet.iter().copied().collect();
        let mut pieces: Vec<String> = required.to_vec();
        let mut scores: Vec<f64> = required
            .iter()
            .map(|p| {
                let c = p.chars().last().expect("required pieces are non-empty");
                (char_freq[&c] as f64).ln()
            })
            .collect();
        let mut is_required = vec![true; required.len()];
        for (s, score) in scored {
            pieces.push(s.to_string());
            scores.push((score as f64).ln());
            is_required.push(false);
        }
        Inventory::new(pieces, scores, is_required)
    }
}
