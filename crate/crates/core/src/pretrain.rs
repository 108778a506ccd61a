//! Masked-LM / next-sentence pretraining instances and training-schedule
//! arithmetic.

use std::io::{self, Read, Write};
use std::ops::Range;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::{tokenize_sentence, TokenizerOptions};
use crate::vocab::{SubwordVocabulary, CLS, MASK, SEP};

#[derive(Debug, Error)]
pub enum PretrainError {
    #[error("next-sentence probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("negative pairs need at least two documents, corpus has {0}")]
    NoNegativeCandidates(usize),
    #[error("maximum sequence length {0} is below 5")]
    SequenceTooShort(usize),
    #[error("pair has an empty segment")]
    EmptySegment,
    #[error("masking fractions {replace_mask} + {replace_random} exceed 1 or are negative")]
    BadMaskingFractions {
        replace_mask: f64,
        replace_random: f64,
    },
    #[error("mask probability {0} is outside [0, 1]")]
    BadMaskProbability(f64),
    #[error("vocabulary lacks special token {0}")]
    MissingSpecial(&'static str),
    #[error("schedule parameter `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("corrupt instance record: {0}")]
    CorruptRecord(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Location of a sentence: (block index, sentence index within the block).
pub type SentenceRef = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NspPair<T> {
    pub segment_a: T,
    pub segment_b: T,
    pub is_next: bool,
    pub source_a: SentenceRef,
    pub source_b: SentenceRef,
}

/// Sentence index over blocks for uniform sampling outside one block.
struct SentenceIndex {
    offsets: Vec<usize>,
    total: usize,
}

impl SentenceIndex {
    fn new<T>(blocks: &[Vec<T>]) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut total = 0;
        for b in blocks {
            offsets.push(total);
            total += b.len();
        }
        SentenceIndex { offsets, total }
    }

    fn locate(&self, global: usize) -> SentenceRef {
        let block = self.offsets.partition_point(|&o| o <= global) - 1;
        (block, global - self.offsets[block])
    }

    /// Uniform sentence from any block except `exclude`.
    fn sample_outside<R: Rng>(
        &self,
        exclude: usize,
        len: usize,
        rng: &mut R,
    ) -> Option<SentenceRef> {
        let pool = self.total - len;
        if pool == 0 {
            return None;
        }
        let mut k = rng.gen_range(0..pool);
        if k >= self.offsets[exclude] {
            k += len;
        }
        Some(self.locate(k))
    }
}

fn check_probability(p_next: f64) -> Result<(), PretrainError> {
    if (0.0..=1.0).contains(&p_next) {
        Ok(())
    } else {
        Err(PretrainError::BadProbability(p_next))
    }
}

/// One pair per sentence that has a successor in its block, for the blocks
/// in `range`. Negatives are drawn from the whole corpus.
fn nsp_refs<T, R: Rng>(
    blocks: &[Vec<T>],
    index: &SentenceIndex,
    range: Range<usize>,
    p_next: f64,
    rng: &mut R,
) -> Result<Vec<(SentenceRef, SentenceRef, bool)>, PretrainError> {
    let mut out = Vec::new();
    for doc in range {
        let len = blocks[doc].len();
        for i in 0..len.saturating_sub(1) {
            if rng.gen_bool(p_next) {
                out.push(((doc, i), (doc, i + 1), true));
            } else {
                let other = index
                    .sample_outside(doc, len, rng)
                    .ok_or(PretrainError::NoNegativeCandidates(blocks.len()))?;
                out.push(((doc, i), other, false));
            }
        }
    }
    Ok(out)
}

/// Next-sentence pairs over a corpus of blocks (documents or sections).
///
/// Each sentence with a successor in its block yields one pair. With
/// probability `p_next` the second segment is that successor, otherwise a
/// sentence drawn uniformly from the other blocks.
pub fn build_nsp_pairs<T: Clone>(
    blocks: &[Vec<T>],
    p_next: f64,
    seed: u64,
) -> Result<Vec<NspPair<T>>, PretrainError> {
    check_probability(p_next)?;
    if blocks.len() < 2 && p_next < 1.0 {
        return Err(PretrainError::NoNegativeCandidates(blocks.len()));
    }
    let index = SentenceIndex::new(blocks);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let refs = nsp_refs(blocks, &index, 0..blocks.len(), p_next, &mut rng)?;
    Ok(refs
        .into_iter()
        .map(|(a, b, is_next)| NspPair {
            segment_a: blocks[a.0][a.1].clone(),
            segment_b: blocks[b.0][b.1].clone(),
            is_next,
            source_a: a,
            source_b: b,
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainInstance {
    pub pieces: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub masked_positions: Vec<usize>,
    pub masked_labels: Vec<u32>,
    pub is_next: bool,
}

impl PretrainInstance {
    /// Puts the stored labels back at the masked positions.
    pub fn unmasked(&self) -> PretrainInstance {
        let mut pieces = self.pieces.clone();
        for (&pos, &label) in self.masked_positions.iter().zip(&self.masked_labels) {
            pieces[pos] = label;
        }
        PretrainInstance {
            pieces,
            segment_ids: self.segment_ids.clone(),
            masked_positions: Vec::new(),
            masked_labels: Vec::new(),
            is_next: self.is_next,
        }
    }
}

fn special_id(vocab: &SubwordVocabulary, name: &'static str) -> Result<u32, PretrainError> {
    vocab.id(name).ok_or(PretrainError::MissingSpecial(name))
}

/// `[CLS] a [SEP] b [SEP]`, truncating the longer segment from its end
/// (the first one on ties) until the instance fits.
pub fn pack_to_length(
    segment_a: &[u32],
    segment_b: &[u32],
    is_next: bool,
    vocab: &SubwordVocabulary,
    max_seq_len: usize,
) -> Result<PretrainInstance, PretrainError> {
    if max_seq_len < 5 {
        return Err(PretrainError::SequenceTooShort(max_seq_len));
    }
    if segment_a.is_empty() || segment_b.is_empty() {
        return Err(PretrainError::EmptySegment);
    }
    let cls = special_id(vocab, CLS)?;
    let sep = special_id(vocab, SEP)?;
    let (mut la, mut lb) = (segment_a.len(), segment_b.len());
    while la + lb + 3 > max_seq_len {
        if la >= lb {
            la -= 1;
        } else {
            lb -= 1;
        }
    }
    let mut pieces = Vec::with_capacity(la + lb + 3);
    pieces.push(cls);
    pieces.extend_from_slice(&segment_a[..la]);
    pieces.push(sep);
    pieces.extend_from_slice(&segment_b[..lb]);
    pieces.push(sep);
    let mut segment_ids = vec![0u8; la + 2];
    segment_ids.resize(la + lb + 3, 1);
    Ok(PretrainInstance {
        pieces,
        segment_ids,
        masked_positions: Vec::new(),
        masked_labels: Vec::new(),
        is_next,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskingConfig {
    pub mask_prob: f64,
    /// Share of selected positions replaced by `[MASK]`.
    pub replace_mask: f64,
    /// Share of selected positions replaced by a random piece.
    pub replace_random: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            mask_prob: 0.15,
            replace_mask: 0.8,
            replace_random: 0.1,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<(), PretrainError> {
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(PretrainError::BadMaskProbability(self.mask_prob));
        }
        if self.replace_mask < 0.0
            || self.replace_random < 0.0
            || self.replace_mask + self.replace_random > 1.0
        {
            return Err(PretrainError::BadMaskingFractions {
                replace_mask: self.replace_mask,
                replace_random: self.replace_random,
            });
        }
        Ok(())
    }
}

/// Static masking against a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct Masker {
    config: MaskingConfig,
    mask_id: u32,
    cls_id: u32,
    sep_id: u32,
    random_pool: Vec<u32>,
}

impl Masker {
    pub fn new(vocab: &SubwordVocabulary, config: MaskingConfig) -> Result<Self, PretrainError> {
        config.validate()?;
        Ok(Masker {
            config,
            mask_id: special_id(vocab, MASK)?,
            cls_id: special_id(vocab, CLS)?,
            sep_id: special_id(vocab, SEP)?,
            random_pool: vocab.piece_ids(),
        })
    }

    /// Selects each non-`[CLS]`/`[SEP]` position with `mask_prob`; selected
    /// positions become `[MASK]`, a random real piece, or stay unchanged.
    pub fn apply<R: Rng>(&self, instance: &PretrainInstance, rng: &mut R) -> PretrainInstance {
        let mut out = instance.clone();
        out.masked_positions.clear();
        out.masked_labels.clear();
        if self.config.mask_prob == 0.0 {
            return out;
        }
        for (pos, id) in out.pieces.iter_mut().enumerate() {
            if *id == self.cls_id || *id == self.sep_id {
                continue;
            }
            if !rng.gen_bool(self.config.mask_prob) {
                continue;
            }
            out.masked_positions.push(pos);
            out.masked_labels.push(*id);
            let u: f64 = rng.gen();
            if u < self.config.replace_mask {
                *id = self.mask_id;
            } else if u < self.config.replace_mask + self.config.replace_random
                && !self.random_pool.is_empty()
            {
                *id = self.random_pool[rng.gen_range(0..self.random_pool.len())];
            }
        }
        out
    }
}

pub fn apply_mlm_masking(
    instance: &PretrainInstance,
    vocab: &SubwordVocabulary,
    seed: u64,
    config: MaskingConfig,
) -> Result<PretrainInstance, PretrainError> {
    let masker = Masker::new(vocab, config)?;
    Ok(masker.apply(instance, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// End-to-end instance generation settings.
#[derive(Debug, Clone)]
pub struct InstanceConfig {
    pub max_seq_len: usize,
    pub p_next: f64,
    pub masking: MaskingConfig,
    pub seed: u64,
    /// Document-aligned shards. Shard `k` draws from the ChaCha stream `k`
    /// of the global seed, so output does not depend on thread count.
    pub shards: usize,
    pub tokenizer: TokenizerOptions,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            max_seq_len: 128,
            p_next: 0.5,
            masking: MaskingConfig::default(),
            seed: 12345,
            shards: 1,
            tokenizer: TokenizerOptions::default(),
        }
    }
}

/// Tokenizes, pairs, packs and masks a corpus of blocks.
pub fn generate_instances<S: AsRef<str> + Sync>(
    blocks: &[Vec<S>],
    vocab: &SubwordVocabulary,
    config: &InstanceConfig,
) -> Result<Vec<PretrainInstance>, PretrainError> {
    check_probability(config.p_next)?;
    if config.max_seq_len < 5 {
        return Err(PretrainError::SequenceTooShort(config.max_seq_len));
    }
    if blocks.len() < 2 && config.p_next < 1.0 {
        return Err(PretrainError::NoNegativeCandidates(blocks.len()));
    }
    let masker = Masker::new(vocab, config.masking)?;
    let ids: Vec<Vec<Vec<u32>>> = blocks
        .par_iter()
        .map(|block| {
            block
                .iter()
                .map(|s| {
                    tokenize_sentence(vocab, s.as_ref(), &config.tokenizer)
                        .pieces
                        .iter()
                        .map(|p| vocab.id(p).expect("tokenizer emits vocabulary entries"))
                        .collect()
                })
                .collect()
        })
        .collect();
    let index = SentenceIndex::new(&ids);
    let shards = config.shards.clamp(1, blocks.len().max(1));
    let per_shard = blocks.len().div_ceil(shards);

    let results: Vec<Result<Vec<PretrainInstance>, PretrainError>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let start = (shard * per_shard).min(blocks.len());
            let end = ((shard + 1) * per_shard).min(blocks.len());
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(shard as u64);
            let refs = nsp_refs(&ids, &index, start..end, config.p_next, &mut rng)?;
            let mut out = Vec::with_capacity(refs.len());
            for (a, b, is_next) in refs {
                let seg_a = &ids[a.0][a.1];
                let seg_b = &ids[b.0][b.1];
                if seg_a.is_empty() || seg_b.is_empty() {
                    continue;
                }
                let inst = pack_to_length(seg_a, seg_b, is_next, vocab, config.max_seq_len)?;
                out.push(masker.apply(&inst, &mut rng));
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    Ok(all)
}

pub fn write_jsonl<'a, I, W>(instances: I, mut out: W) -> io::Result<()>
where
    I: IntoIterator<Item = &'a PretrainInstance>,
    W: Write,
{
    for inst in instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Length-prefixed little-endian framing, one record per instance:
///
/// ```text
/// record := len:u32 body                (len = byte length of body)
/// body   := is_next:u8 n:u32 id:u32{n} segment:u8{n}
///           m:u32 position:u32{m} label:u32{m}
/// ```
pub fn write_binary<'a, I, W>(instances: I, mut out: W) -> io::Result<()>
where
    I: IntoIterator<Item = &'a PretrainInstance>,
    W: Write,
{
    let mut body = Vec::new();
    for inst in instances {
        body.clear();
        body.write_u8(u8::from(inst.is_next))?;
        body.write_u32::<LittleEndian>(inst.pieces.len() as u32)?;
        for &id in &inst.pieces {
            body.write_u32::<LittleEndian>(id)?;
        }
        body.extend_from_slice(&inst.segment_ids);
        body.write_u32::<LittleEndian>(inst.masked_positions.len() as u32)?;
        for &p in &inst.masked_positions {
            body.write_u32::<LittleEndian>(p as u32)?;
        }
        for &l in &inst.masked_labels {
            body.write_u32::<LittleEndian>(l)?;
        }
        out.write_u32::<LittleEndian>(body.len() as u32)?;
        out.write_all(&body)?;
    }
    Ok(())
}

pub fn read_binary(mut input: impl Read) -> Result<Vec<PretrainInstance>, PretrainError> {
    let mut out = Vec::new();
    loop {
        let len = match input.read_u32::<LittleEndian>() {
            Ok(n) => n as usize,
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        let mut body = vec![0u8; len];
        input.read_exact(&mut body)?;
        let mut r = body.as_slice();
        let corrupt = |_| PretrainError::CorruptRecord(format!("record {}", out.len()));
        let is_next = r.read_u8().map_err(corrupt)? != 0;
        let n = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
        let pieces = (0..n)
            .map(|_| r.read_u32::<LittleEndian>())
            .collect::<io::Result<Vec<_>>>()
            .map_err(corrupt)?;
        if r.len() < n {
            return Err(PretrainError::CorruptRecord(format!(
                "record {}",
                out.len()
            )));
        }
        let segment_ids = r[..n].to_vec();
        r = &r[n..];
        let m = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
        let masked_positions = (0..m)
            .map(|_| r.read_u32::<LittleEndian>().map(|p| p as usize))
            .collect::<io::Result<Vec<_>>>()
            .map_err(corrupt)?;
        let masked_labels = (0..m)
            .map(|_| r.read_u32::<LittleEndian>())
            .collect::<io::Result<Vec<_>>>()
            .map_err(corrupt)?;
        if !r.is_empty() {
            return Err(PretrainError::CorruptRecord(format!(
                "record {} has {} trailing bytes",
                out.len(),
                r.len()
            )));
        }
        out.push(PretrainInstance {
            pieces,
            segment_ids,
            masked_positions,
            masked_labels,
            is_next,
        });
    }
    Ok(out)
}

/// Step arithmetic for one pretraining phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub per_device_batch: u64,
    pub num_devices: u64,
    pub global_batch: u64,
    pub sentences: u64,
    pub steps_per_epoch: u64,
    pub epochs: u64,
    pub total_steps: u64,
    pub max_seq_len: u64,
}

pub fn compute_schedule(
    sentences: u64,
    per_device_batch: u64,
    num_devices: u64,
    epochs: u64,
    max_seq_len: u64,
) -> Result<Schedule, PretrainError> {
    for (name, v) in [
        ("sentences", sentences),
        ("per_device_batch", per_device_batch),
        ("num_devices", num_devices),
        ("epochs", epochs),
        ("max_seq_len", max_seq_len),
    ] {
        if v == 0 {
            return Err(PretrainError::NonPositive(name));
        }
    }
    let global_batch = per_device_batch * num_devices;
    let steps_per_epoch = sentences.div_ceil(global_batch);
    Ok(Schedule {
        per_device_batch,
        num_devices,
        global_batch,
        sentences,
        steps_per_epoch,
        epochs,
        total_steps: steps_per_epoch * epochs,
        max_seq_len,
    })
}

/// Sentence exposure for a follow-up phase: the previous phase's exposure
/// (`global_batch × total_steps`) divided by `ratio_denominator`, rounded
/// half up.
pub fn phase2_quota(phase1: &Schedule, ratio_denominator: u64) -> Result<u64, PretrainError> {
    if ratio_denominator == 0 {
        return Err(PretrainError::NonPositive("ratio_denominator"));
    }
    let exposure = u128::from(phase1.global_batch) * u128::from(phase1.total_steps);
    let d = u128::from(ratio_denominator);
    Ok(((2 * exposure + d) / (2 * d)) as u64)
}

/// Rounds half up to a multiple of `unit`.
pub fn round_to(value: u64, unit: u64) -> u64 {
    (value + unit / 2) / unit * unit
}

impl Schedule {
    pub fn render_table(&self) -> String {
        let rows = [
            ("max sequence length", self.max_seq_len.to_string()),
            ("batch per device", self.per_device_batch.to_string()),
            ("devices", self.num_devices.to_string()),
            (
                "global batch",
                format!(
                    "{} x {} = {}",
                    self.per_device_batch, self.num_devices, self.global_batch
                ),
            ),
            ("sentences", group_digits(self.sentences)),
            (
                "steps per epoch",
                format!(
                    "ceil({} / {}) = {} (~{})",
                    group_digits(self.sentences),
                    self.global_batch,
                    group_digits(self.steps_per_epoch),
                    group_digits(round_to(self.steps_per_epoch, 1000))
                ),
            ),
            ("epochs", self.epochs.to_string()),
            (
                "total steps",
                format!(
                    "{} x {} = {}",
                    group_digits(self.steps_per_epoch),
                    self.epochs,
                    group_digits(self.total_steps)
                ),
            ),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }
}

/// `1234567` → `1,234,567`.
pub fn group_digits(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}
