//! Deterministic stand-ins for a trained speller.
//!
//! A [`PrefixTableModel`] maps every listed prefix of emitted tokens to the
//! logits of the next token and the attention row produced at that step.
//! Models are either hand-written JSON Lines files or produced by
//! [`generate_synthetic`].

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorers::eos_allowed;
use crate::types::{check_finite, normalize_logits, validate_attention_row, Vocabulary};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Logits and attention produced at one decoding step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub logits: Vec<f64>,
    pub attention: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrefixTableModel {
    vocab: Vocabulary,
    frame_count: usize,
    table: BTreeMap<Vec<usize>, StepOutput>,
    reference: Vec<usize>,
    fallback: bool,
    uniform: StepOutput,
}

impl PrefixTableModel {
    /// Builds a model with fallback disabled.
    pub fn new(
        vocab: Vocabulary,
        frame_count: usize,
        table: BTreeMap<Vec<usize>, StepOutput>,
        reference: Vec<usize>,
    ) -> Result<Self> {
        if frame_count == 0 {
            return Err(Error::Model("frame_count must be positive".into()));
        }
        for &t in &reference {
            vocab.check(t)?;
            if t == vocab.eos() {
                return Err(Error::Model("reference must not contain EOS".into()));
            }
        }
        for (prefix, entry) in &table {
            validate_entry(&vocab, frame_count, prefix, entry)?;
        }
        if !table.contains_key(&Vec::new()) {
            return Err(Error::Model("missing empty-prefix record".into()));
        }
        for i in 0..reference.len() {
            if !table.contains_key(&reference[..i]) {
                return Err(Error::Model(format!(
                    "reference prefix {:?} missing from table",
                    vocab.decode(&reference[..i])
                )));
            }
        }
        let uniform = StepOutput {
            logits: vec![0.0; vocab.len()],
            attention: vec![1.0 / frame_count as f64; frame_count],
        };
        Ok(Self {
            vocab,
            frame_count,
            table,
            reference,
            fallback: false,
            uniform,
        })
    }

    pub fn with_fallback(mut self, enabled: bool) -> Self {
        self.fallback = enabled;
        self
    }

    pub fn fallback(&self) -> bool {
        self.fallback
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn reference(&self) -> &[usize] {
        &self.reference
    }

    pub fn reference_text(&self) -> String {
        self.vocab.decode(&self.reference)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<usize>, &StepOutput)> {
        self.table.iter()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Logits and attention row for the next token after `prefix`.
    pub fn step(&self, prefix: &[usize]) -> Result<&StepOutput> {
        match self.table.get(prefix) {
            Some(entry) => Ok(entry),
            None if self.fallback => Ok(&self.uniform),
            None => Err(Error::UnknownPrefix(prefix.to_vec())),
        }
    }

    /// Whether some proper prefix of the reference lets EOS through a gate
    /// of width `margin` at temperature 1.
    pub fn has_truncation_trap(&self, margin: f64) -> bool {
        (0..self.reference.len()).any(|i| {
            let entry = &self.table[&self.reference[..i]];
            let dist = normalize_logits(&entry.logits).expect("validated logits");
            eos_allowed(&dist, margin, self.vocab.eos())
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = fs::File::create(path)?;
        out.write_all(self.to_jsonl()?.as_bytes())?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let header = Header {
            version: MODEL_FORMAT_VERSION,
            vocab: self.vocab.tokens().iter().map(|c| c.to_string()).collect(),
            eos_index: self.vocab.eos(),
            frame_count: self.frame_count,
            reference: self.reference_text(),
            fallback: self.fallback,
        };
        let mut text = serde_json::to_string(&header)?;
        text.push('\n');
        for (prefix, entry) in &self.table {
            let record = Record {
                prefix: self.vocab.decode(prefix),
                logits: entry.logits.clone(),
                attention: entry.attention.clone(),
            };
            text.push_str(&serde_json::to_string(&record)?);
            text.push('\n');
        }
        Ok(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)?;
        Self::read_jsonl(BufReader::new(file), path)
    }

    pub fn read_jsonl(reader: impl BufRead, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = reader.lines().enumerate();
        let header: Header = loop {
            match lines.next() {
                Some((i, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
                }
                None => return Err(parse_err(0, "missing header record".into())),
            }
        };
        if header.version != MODEL_FORMAT_VERSION {
            return Err(parse_err(1, format!("unsupported model version {}", header.version)));
        }
        let tokens = header
            .vocab
            .iter()
            .map(|t| {
                let mut chars = t.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Ok(c),
                    _ => Err(parse_err(1, format!("token {t:?} is not a single character"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let vocab = Vocabulary::new(tokens, header.eos_index)?;
        let reference = vocab
            .encode(&header.reference)
            .map_err(|e| parse_err(1, e.to_string()))?;

        let mut table = BTreeMap::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record =
                serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
            let prefix = vocab
                .encode(&record.prefix)
                .map_err(|e| parse_err(i + 1, e.to_string()))?;
            let entry = StepOutput {
                logits: record.logits,
                attention: record.attention,
            };
            validate_entry(&vocab, header.frame_count, &prefix, &entry)
                .map_err(|e| parse_err(i + 1, e.to_string()))?;
            if table.insert(prefix, entry).is_some() {
                return Err(parse_err(i + 1, format!("duplicate prefix {:?}", record.prefix)));
            }
        }
        Ok(Self::new(vocab, header.frame_count, table, reference)?.with_fallback(header.fallback))
    }
}

fn validate_entry(vocab: &Vocabulary, frame_count: usize, prefix: &[usize], entry: &StepOutput) -> Result<()> {
    if prefix.contains(&vocab.eos()) {
        return Err(Error::Model("prefix contains EOS".into()));
    }
    if entry.logits.len() != vocab.len() {
        return Err(Error::LengthMismatch {
            expected: vocab.len(),
            actual: entry.logits.len(),
        });
    }
    check_finite(&entry.logits)?;
    if entry.attention.len() != frame_count {
        return Err(Error::Trace(format!(
            "ragged attention row: expected {frame_count} frames, got {}",
            entry.attention.len()
        )));
    }
    validate_attention_row(&entry.attention)
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    vocab: Vec<String>,
    eos_index: usize,
    frame_count: usize,
    reference: String,
    #[serde(default, skip_serializing_if = "is_false")]
    fallback: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    prefix: String,
    logits: Vec<f64>,
    attention: Vec<f64>,
}

/// Words used to build synthetic references when the vocabulary has letters
/// and a space.
pub const LEXICON: &[&str] = &[
    "a", "i", "an", "as", "at", "be", "by", "in", "is", "it", "of", "on", "to", "and", "are",
    "but", "for", "has", "its", "new", "the", "was", "bank", "from", "rate", "said", "sales",
    "that", "will", "with", "year", "price", "rose", "share", "stock", "trade", "market",
    "company", "percent",
];

const MAX_WORD: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub vocab_size: usize,
    pub frame_count: usize,
    pub transcript_length: usize,
    /// Scale of the correct token's logit margin.
    pub sharpness: f64,
    pub distractor_count: usize,
    /// Plant a reference prefix where EOS is a close runner-up.
    pub truncation_trap: bool,
    /// Offer a repeat of the last word as a runner-up to the final EOS.
    pub loop_trap: bool,
    /// Number of positions where a wrong token confidently outranks the
    /// correct one; the wrong branch then continues the reference with
    /// flat, unconfident distributions.
    pub confusions: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            vocab_size: 28,
            frame_count: 24,
            transcript_length: 24,
            sharpness: 20.0,
            distractor_count: 2,
            truncation_trap: false,
            loop_trap: false,
            confusions: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.transcript_length < 1 {
            return Err(Error::Config("transcript_length must be >= 1".into()));
        }
        if self.frame_count < 1 || self.frame_count > self.transcript_length {
            return Err(Error::Config(format!(
                "frame_count must be in 1..={} (transcript_length), got {}",
                self.transcript_length, self.frame_count
            )));
        }
        if !(self.sharpness.is_finite() && self.sharpness > 0.0) {
            return Err(Error::Config(format!("sharpness must be > 0, got {}", self.sharpness)));
        }
        Vocabulary::wsj_prefix(self.vocab_size)?;
        if self.distractor_count + 2 > self.vocab_size {
            return Err(Error::Config(format!(
                "distractor_count {} too large for vocabulary of {}",
                self.distractor_count, self.vocab_size
            )));
        }
        if self.confusions > 0 && self.vocab_size < 3 {
            return Err(Error::Config("confusions need at least two emittable tokens".into()));
        }
        Ok(())
    }
}

/// Builds a sentence of exactly `length` characters from [`LEXICON`].
pub fn lexicon_sentence(rng: &mut impl Rng, length: usize) -> String {
    let mut out = String::new();
    loop {
        let sep = usize::from(!out.is_empty());
        let rem = length - out.len() - sep;
        let word = if rem <= MAX_WORD {
            let fitting: Vec<&str> = LEXICON.iter().copied().filter(|w| w.len() == rem).collect();
            *fitting.choose(rng).expect("lexicon has every length up to MAX_WORD")
        } else {
            let fitting: Vec<&str> = LEXICON
                .iter()
                .copied()
                .filter(|w| w.len() + 1 != rem)
                .collect();
            *fitting.choose(rng).expect("non-empty lexicon")
        };
        if sep == 1 {
            out.push(' ');
        }
        out.push_str(word);
        if out.len() == length {
            return out;
        }
    }
}

fn uses_lexicon(vocab: &Vocabulary) -> bool {
    vocab.index_of(' ').is_some() && ('a'..='z').all(|c| vocab.index_of(c).is_some())
}

/// Unimodal window centred on `center`.
fn window(frames: usize, center: usize) -> Vec<f64> {
    let mut row = vec![0.0; frames];
    row[center] += 0.8;
    for side in [center.checked_sub(1), Some(center + 1)] {
        match side.filter(|&f| f < frames) {
            Some(f) => row[f] += 0.1,
            None => row[center] += 0.1,
        }
    }
    row
}

struct Builder<'a> {
    cfg: &'a SyntheticConfig,
    vocab: Vocabulary,
}

impl Builder<'_> {
    /// Correct token at `sharpness * [1, 1.5)`, distractors at `sharpness * [0.4, 0.6)`.
    fn confident(&self, rng: &mut ChaCha8Rng, target: usize) -> Vec<f64> {
        let kappa = self.cfg.sharpness;
        let size = self.vocab.len();
        let mut logits = vec![0.0; size];
        logits[target] = kappa * (1.0 + 0.5 * rng.gen::<f64>());
        let mut pool: Vec<usize> = (0..size)
            .filter(|&t| t != target && t != self.vocab.eos())
            .collect();
        pool.shuffle(rng);
        for &d in pool.iter().take(self.cfg.distractor_count) {
            logits[d] = kappa * rng.gen_range(0.4..0.6);
        }
        logits
    }

    fn row(&self, step: usize) -> Vec<f64> {
        let frames = self.cfg.frame_count;
        let len = self.cfg.transcript_length;
        let center = if step >= len {
            frames - 1
        } else {
            (((step as f64 + 0.5) * frames as f64 / len as f64) as usize).min(frames - 1)
        };
        window(frames, center)
    }
}

/// Generates a prefix-table model whose greedy path is the reference unless
/// confusions are planted. Off-table prefixes fall back to uniform output.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<PrefixTableModel> {
    cfg.validate()?;
    let vocab = Vocabulary::wsj_prefix(cfg.vocab_size)?;
    let b = Builder {
        cfg,
        vocab: vocab.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let len = cfg.transcript_length;
    let eos = vocab.eos();
    let emittable: Vec<usize> = vocab.emittable().collect();
    let reference: Vec<usize> = if uses_lexicon(&vocab) {
        vocab.encode(&lexicon_sentence(&mut rng, len))?
    } else {
        (0..len).map(|_| *emittable.choose(&mut rng).unwrap()).collect()
    };
    let space = vocab.index_of(' ');

    let mut table = BTreeMap::new();
    for i in 0..=len {
        let target = reference.get(i).copied().unwrap_or(eos);
        table.insert(
            reference[..i].to_vec(),
            StepOutput {
                logits: b.confident(&mut rng, target),
                attention: b.row(i),
            },
        );
    }

    if cfg.truncation_trap {
        let lo = (len * 3).div_ceil(10).max(1);
        let hi = (len * 7 / 10).max(lo);
        let boundaries: Vec<usize> = (lo..=hi.min(len - 1))
            .filter(|&i| space.is_some_and(|s| reference[i] == s))
            .collect();
        let candidates: Vec<usize> = if boundaries.is_empty() {
            (lo.min(len - 1)..=hi.min(len - 1)).collect()
        } else {
            boundaries
        };
        if let Some(&k) = candidates.choose(&mut rng) {
            let entry = table.get_mut(&reference[..k]).expect("reference prefix");
            let top = entry.logits[reference[k]];
            let eos_logit = top - rng.gen_range(0.05..0.45);
            entry.logits[eos] = eos_logit;
            for (t, l) in entry.logits.iter_mut().enumerate() {
                if t != eos && t != reference[k] && *l >= eos_logit - 0.5 {
                    *l = eos_logit - 0.5;
                }
            }
        }
    }

    if cfg.loop_trap {
        let repeat: Vec<(usize, usize)> = match space {
            Some(s) => {
                let start = reference.iter().rposition(|&t| t == s).map_or(0, |p| p + 1);
                // (token, step whose attention is revisited)
                std::iter::once((s, start.saturating_sub(1)))
                    .chain((start..len).map(|j| (reference[j], j)))
                    .collect()
            }
            None => (len.saturating_sub(3)..len).map(|j| (reference[j], j)).collect(),
        };
        let end = table.get_mut(&reference).expect("full reference");
        let top = end.logits[eos];
        let first = repeat[0].0;
        end.logits[first] = top - rng.gen_range(0.3..1.0);
        let mut prefix = reference.clone();
        for j in 0..repeat.len() {
            prefix.push(repeat[j].0);
            let (target, step) = match repeat.get(j + 1) {
                Some(&(t, s)) => (t, s),
                None => (eos, len),
            };
            let logits = b.confident(&mut rng, target);
            table.insert(
                prefix.clone(),
                StepOutput {
                    logits,
                    attention: b.row(step),
                },
            );
        }
    }

    let mut confusion_sites: Vec<usize> = (1..len)
        .filter(|&k| (3..=8).contains(&(len - k - 1)))
        .filter(|&k| space != Some(reference[k]))
        .collect();
    confusion_sites.shuffle(&mut rng);
    for &k in confusion_sites.iter().take(cfg.confusions) {
        let correct = reference[k];
        let wrong_pool: Vec<usize> = emittable
            .iter()
            .copied()
            .filter(|&t| t != correct && Some(t) != space)
            .collect();
        let wrong = *wrong_pool.choose(&mut rng).expect("at least two emittable tokens");
        let kappa = cfg.sharpness;
        let entry = table.get_mut(&reference[..k]).expect("reference prefix");
        let top = kappa * (1.0 + 0.5 * rng.gen::<f64>());
        let gap = kappa * rng.gen_range(0.25..0.35);
        entry.logits[wrong] = top;
        entry.logits[correct] = top - gap;
        for (t, l) in entry.logits.iter_mut().enumerate() {
            if t != wrong && t != correct && *l >= top - gap {
                *l = top - gap - 1.0;
            }
        }
        let mut prefix = reference[..k].to_vec();
        prefix.push(wrong);
        for i in k + 1..=len {
            let target = reference.get(i).copied().unwrap_or(eos);
            let mut logits = vec![0.0; vocab.len()];
            logits[target] = 0.2 * kappa;
            table.insert(
                prefix.clone(),
                StepOutput {
                    logits,
                    attention: b.row(i),
                },
            );
            if i < len {
                prefix.push(target);
            }
        }
    }

    Ok(PrefixTableModel::new(vocab, cfg.frame_count, table, reference)?.with_fallback(true))
}

/// A model listing every prefix of up to `max_prefix` emittable tokens, with
/// logits drawn uniformly from `[-scale, scale]` and random attention rows.
/// Fallback is disabled.
pub fn generate_dense(
    seed: u64,
    vocab: &Vocabulary,
    frame_count: usize,
    max_prefix: usize,
    scale: f64,
) -> Result<PrefixTableModel> {
    if frame_count == 0 {
        return Err(Error::Config("frame_count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emittable: Vec<usize> = vocab.emittable().collect();
    let mut table = BTreeMap::new();
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for depth in 0..=max_prefix {
        let mut next = Vec::new();
        for prefix in frontier {
            let logits = (0..vocab.len()).map(|_| rng.gen_range(-scale..=scale)).collect();
            let raw: Vec<f64> = (0..frame_count).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let z: f64 = raw.iter().sum();
            let attention = raw.iter().map(|a| a / z).collect();
            if depth < max_prefix {
                for &t in &emittable {
                    let mut p = prefix.clone();
                    p.push(t);
                    next.push(p);
                }
            }
            table.insert(prefix, StepOutput { logits, attention });
        }
        frontier = next;
    }
    let reference = vec![emittable[0]; max_prefix.min(1)];
    PrefixTableModel::new(vocab.clone(), frame_count, table, reference)
}
