//! Vocabulary, log-domain distributions, attention traces and hypotheses.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercase letters, space, apostrophe and a noise marker.
const WSJ_SYMBOLS: &str = "abcdefghijklmnopqrstuvwxyz '~";
const WSJ_EOS: char = '$';

/// Ordered token set with a distinguished end-of-sequence token.
///
/// Every token is a single unicode scalar so that a prefix can be written as
/// a plain string and read back without ambiguity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<char>,
    eos_index: usize,
    #[serde(skip)]
    lookup: HashMap<char, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    eos_index: usize,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(repr: VocabularyRepr) -> Result<Self> {
        let tokens = repr
            .tokens
            .iter()
            .map(|t| {
                let mut chars = t.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Ok(c),
                    _ => Err(Error::Vocabulary(format!(
                        "token {t:?} is not a single character"
                    ))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Vocabulary::new(tokens, repr.eos_index)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens.iter().map(|c| c.to_string()).collect(),
            eos_index: v.eos_index,
        }
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<char>, eos_index: usize) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::Vocabulary(format!(
                "need at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        if eos_index >= tokens.len() {
            return Err(Error::Vocabulary(format!(
                "eos_index {eos_index} out of range for {} tokens",
                tokens.len()
            )));
        }
        let mut lookup = HashMap::with_capacity(tokens.len());
        for (i, &c) in tokens.iter().enumerate() {
            if lookup.insert(c, i).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {c:?}")));
            }
        }
        Ok(Self {
            tokens,
            eos_index,
            lookup,
        })
    }

    /// Builds a vocabulary from the characters of `symbols` followed by `eos`.
    pub fn from_symbols(symbols: &str, eos: char) -> Result<Self> {
        let mut tokens: Vec<char> = symbols.chars().collect();
        let eos_index = tokens.len();
        tokens.push(eos);
        Self::new(tokens, eos_index)
    }

    /// The WSJ character set: `a`-`z`, space, apostrophe, a noise marker
    /// (`~`) and the end-of-sequence token (`$`).
    pub fn wsj() -> Self {
        Self::from_symbols(WSJ_SYMBOLS, WSJ_EOS).expect("preset vocabulary is valid")
    }

    /// The first `size - 1` symbols of the WSJ preset plus EOS.
    pub fn wsj_prefix(size: usize) -> Result<Self> {
        let max = WSJ_SYMBOLS.chars().count() + 1;
        if !(2..=max).contains(&size) {
            return Err(Error::Vocabulary(format!(
                "preset size must be in 2..={max}, got {size}"
            )));
        }
        let symbols: String = WSJ_SYMBOLS.chars().take(size - 1).collect();
        Self::from_symbols(&symbols, WSJ_EOS)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> usize {
        self.eos_index
    }

    pub fn tokens(&self) -> &[char] {
        &self.tokens
    }

    pub fn token(&self, index: usize) -> Option<char> {
        self.tokens.get(index).copied()
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.lookup.get(&c).copied()
    }

    pub fn check(&self, index: usize) -> Result<()> {
        if index < self.len() {
            Ok(())
        } else {
            Err(Error::TokenOutOfRange {
                index,
                size: self.len(),
            })
        }
    }

    /// Maps a string to token indices, one per character.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                self.index_of(c)
                    .ok_or_else(|| Error::Vocabulary(format!("character {c:?} not in vocabulary")))
            })
            .collect()
    }

    /// Maps token indices back to a string. EOS is dropped.
    pub fn decode(&self, tokens: &[usize]) -> String {
        tokens
            .iter()
            .filter(|&&t| t != self.eos_index)
            .filter_map(|&t| self.token(t))
            .collect()
    }

    /// Non-EOS token indices in vocabulary order.
    pub fn emittable(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| i != self.eos_index)
    }
}

/// Natural-log probabilities, one per vocabulary token.
#[derive(Clone, Debug, PartialEq)]
pub struct LogDistribution {
    logp: Vec<f64>,
}

impl LogDistribution {
    /// Wraps log-probabilities that are already normalized.
    pub fn from_log_probs(logp: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = logp
            .iter()
            .enumerate()
            .find(|(_, v)| v.is_nan() || **v > 0.0)
        {
            return Err(Error::NonFinite { index, value });
        }
        let total: f64 = logp.iter().map(|v| v.exp()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "log distribution sums to {total}, not 1"
            )));
        }
        Ok(Self { logp })
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.logp
    }

    pub fn get(&self, index: usize) -> f64 {
        self.logp[index]
    }

    pub fn len(&self) -> usize {
        self.logp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logp.is_empty()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.logp.iter().map(|v| v.exp()).collect()
    }

    /// Index of the most probable token; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.logp)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.logp
            .iter()
            .filter(|v| v.is_finite())
            .map(|&v| -v.exp() * v)
            .sum()
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        Some((index, &value)) => Err(Error::NonFinite { index, value }),
        None => Ok(()),
    }
}

/// Log-softmax of `logits`.
pub fn normalize_logits(logits: &[f64]) -> Result<LogDistribution> {
    if logits.is_empty() {
        return Err(Error::Config("empty logit vector".into()));
    }
    check_finite(logits)?;
    Ok(LogDistribution {
        logp: log_softmax(logits),
    })
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - log_z).collect()
}

/// Attention rows, one per emitted token, each a distribution over frames.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionTrace {
    rows: Vec<Vec<f64>>,
}

impl AttentionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut trace = Self::new();
        for row in rows {
            trace.push(row)?;
        }
        Ok(trace)
    }

    /// Appends a row after checking it is a distribution of the right width.
    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        validate_attention_row(&row)?;
        if let Some(first) = self.rows.first() {
            if first.len() != row.len() {
                return Err(Error::Trace(format!(
                    "ragged rows: expected width {}, got {}",
                    first.len(),
                    row.len()
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn frame_count(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Cumulative attention received by each frame.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.frame_count()];
        for row in &self.rows {
            for (s, a) in sums.iter_mut().zip(row) {
                *s += a;
            }
        }
        sums
    }
}

pub(crate) fn validate_attention_row(row: &[f64]) -> Result<()> {
    if row.is_empty() {
        return Err(Error::Trace("attention row has no frames".into()));
    }
    if let Some(a) = row.iter().find(|a| !a.is_finite() || **a < 0.0) {
        return Err(Error::Trace(format!("attention weight {a} is not a valid mass")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Trace(format!("attention row sums to {total}")));
    }
    Ok(())
}

/// Individual terms of the decoding criterion for one hypothesis.
///
/// `lm_logp`, `coverage` and `length` are unweighted; `total` is the weighted
/// combination under the config that produced it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub model: f64,
    pub lm: f64,
    pub coverage: usize,
    pub length: usize,
    pub total: f64,
}

/// A partial or finished transcript.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub model_logp: f64,
    pub trace: AttentionTrace,
    pub finished: bool,
    pub breakdown: ScoreBreakdown,
}

impl Hypothesis {
    pub fn empty() -> Self {
        Self::default()
    }

    /// A hypothesis carrying only a model score and no trace, for ranking
    /// externally scored transcripts.
    pub fn scored(tokens: Vec<usize>, model_logp: f64, finished: bool) -> Self {
        Self {
            tokens,
            model_logp,
            finished,
            ..Self::default()
        }
    }

    /// Number of emitted tokens excluding a terminal EOS.
    pub fn emitted(&self) -> usize {
        self.tokens.len() - usize::from(self.finished)
    }

    pub fn score(&self) -> f64 {
        self.breakdown.total
    }
}
