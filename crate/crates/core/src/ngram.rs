//! Character n-gram language model with backoff.
//!
//! Contexts are the up to `order - 1` tokens preceding a position. There is
//! no start-of-sequence padding: the first token of a sequence is predicted
//! from the empty context.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LogDistribution, Vocabulary};

pub const LM_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LmSmoothing {
    /// Add-k estimate at the longest seen context suffix.
    AddK { k: f64 },
    /// Stupid backoff with weight `alpha`, renormalized per context.
    StupidBackoff { alpha: f64 },
}

impl Default for LmSmoothing {
    fn default() -> Self {
        LmSmoothing::AddK { k: 1.0 }
    }
}

impl LmSmoothing {
    pub fn stupid_backoff() -> Self {
        LmSmoothing::StupidBackoff { alpha: 0.4 }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LmSmoothing::AddK { k } if !(k.is_finite() && k > 0.0) => {
                Err(Error::Config(format!("add-k requires k > 0, got {k}")))
            }
            LmSmoothing::StupidBackoff { alpha } if !(alpha.is_finite() && alpha > 0.0) => {
                Err(Error::Config(format!("backoff weight must be > 0, got {alpha}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ContextCounts {
    next: Vec<u64>,
    total: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CharNGramLM {
    order: usize,
    smoothing: LmSmoothing,
    vocab: Vocabulary,
    /// `tables[j]` holds contexts of length `j`.
    tables: Vec<BTreeMap<Vec<usize>, ContextCounts>>,
}

impl CharNGramLM {
    /// Counts n-grams over `corpus`. Every sequence must end with EOS and
    /// contain it nowhere else.
    pub fn train(
        corpus: &[Vec<usize>],
        vocab: &Vocabulary,
        order: usize,
        smoothing: LmSmoothing,
    ) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if order < 1 {
            return Err(Error::Config("n-gram order must be >= 1".into()));
        }
        smoothing.validate()?;
        let size = vocab.len();
        let eos = vocab.eos();
        let mut tables: Vec<BTreeMap<Vec<usize>, ContextCounts>> = vec![BTreeMap::new(); order];
        for seq in corpus {
            if seq.last() != Some(&eos) {
                return Err(Error::Config("training sequence must end with EOS".into()));
            }
            for (i, &token) in seq.iter().enumerate() {
                vocab.check(token)?;
                if token == eos && i + 1 != seq.len() {
                    return Err(Error::Config("EOS inside a training sequence".into()));
                }
                for (j, table) in tables.iter_mut().enumerate().take(i.min(order - 1) + 1) {
                    let entry = table
                        .entry(seq[i - j..i].to_vec())
                        .or_insert_with(|| ContextCounts {
                            next: vec![0; size],
                            total: 0,
                        });
                    entry.next[token] += 1;
                    entry.total += 1;
                }
            }
        }
        Ok(Self {
            order,
            smoothing,
            vocab: vocab.clone(),
            tables,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> LmSmoothing {
        self.smoothing
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn lookup(&self, context: &[usize]) -> Option<&ContextCounts> {
        self.tables.get(context.len())?.get(context)
    }

    /// Distribution of the next token after `context`.
    pub fn next_logp(&self, context: &[usize]) -> LogDistribution {
        let size = self.vocab.len();
        let keep = context.len().min(self.order - 1);
        let history = &context[context.len() - keep..];
        // longest suffix of the history seen in training
        let seen = (0..=keep)
            .take_while(|&j| self.lookup(&history[keep - j..]).is_some())
            .last()
            .unwrap_or(0);
        let probs: Vec<f64> = match self.smoothing {
            LmSmoothing::AddK { k } => {
                let counts = self.lookup(&history[keep - seen..]).expect("seen context");
                let denom = counts.total as f64 + k * size as f64;
                counts.next.iter().map(|&c| (c as f64 + k) / denom).collect()
            }
            LmSmoothing::StupidBackoff { alpha } => {
                let unigram = self.lookup(&[]).expect("unigram counts");
                let denom = (unigram.total + size as u64) as f64;
                let mut scores: Vec<f64> =
                    unigram.next.iter().map(|&c| (c + 1) as f64 / denom).collect();
                for j in 1..=seen {
                    let counts = self.lookup(&history[keep - j..]).expect("seen context");
                    let total = counts.total as f64;
                    for (s, &c) in scores.iter_mut().zip(&counts.next) {
                        *s = if c > 0 { c as f64 / total } else { alpha * *s };
                    }
                }
                let z: f64 = scores.iter().sum();
                scores.into_iter().map(|s| s / z).collect()
            }
        };
        LogDistribution::from_log_probs(probs.into_iter().map(f64::ln).collect())
            .expect("smoothed conditional is a distribution")
    }

    /// Sum of stepwise conditional log-probabilities of `sequence`.
    pub fn log_prob(&self, sequence: &[usize]) -> Result<f64> {
        for &t in sequence {
            self.vocab.check(t)?;
        }
        Ok((0..sequence.len())
            .map(|i| self.next_logp(&sequence[..i]).get(sequence[i]))
            .sum())
    }

    /// Per-token perplexity, EOS included in the token count.
    pub fn perplexity(&self, corpus: &[Vec<usize>]) -> Result<f64> {
        let tokens: usize = corpus.iter().map(Vec::len).sum();
        if tokens == 0 {
            return Err(Error::EmptyCorpus);
        }
        let mut total = 0.0;
        for seq in corpus {
            total += self.log_prob(seq)?;
        }
        Ok((-total / tokens as f64).exp())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&LmFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<LmFile>(text)?.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Appends EOS to each line after encoding it.
pub fn encode_corpus<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    vocab: &Vocabulary,
) -> Result<Vec<Vec<usize>>> {
    lines
        .into_iter()
        .map(|line| {
            let mut seq = vocab.encode(line)?;
            seq.push(vocab.eos());
            Ok(seq)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct LmFile {
    version: u32,
    order: usize,
    smoothing: LmSmoothing,
    vocab: Vocabulary,
    contexts: Vec<ContextRecord>,
}

#[derive(Serialize, Deserialize)]
struct ContextRecord {
    context: Vec<usize>,
    next: Vec<(usize, u64)>,
}

impl From<&CharNGramLM> for LmFile {
    fn from(lm: &CharNGramLM) -> Self {
        let contexts = lm
            .tables
            .iter()
            .flat_map(|t| t.iter())
            .map(|(context, counts)| ContextRecord {
                context: context.clone(),
                next: counts
                    .next
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(t, &c)| (t, c))
                    .collect(),
            })
            .collect();
        LmFile {
            version: LM_FORMAT_VERSION,
            order: lm.order,
            smoothing: lm.smoothing,
            vocab: lm.vocab.clone(),
            contexts,
        }
    }
}

impl TryFrom<LmFile> for CharNGramLM {
    type Error = Error;

    fn try_from(file: LmFile) -> Result<Self> {
        if file.version != LM_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported language model version {}",
                file.version
            )));
        }
        if file.order < 1 {
            return Err(Error::Config("n-gram order must be >= 1".into()));
        }
        file.smoothing.validate()?;
        let size = file.vocab.len();
        let mut tables: Vec<BTreeMap<Vec<usize>, ContextCounts>> = vec![BTreeMap::new(); file.order];
        for record in file.contexts {
            let j = record.context.len();
            if j >= file.order {
                return Err(Error::Model(format!("context longer than order {}", file.order)));
            }
            for &t in &record.context {
                file.vocab.check(t)?;
            }
            let mut next = vec![0; size];
            for (t, c) in record.next {
                file.vocab.check(t)?;
                next[t] += c;
            }
            let total = next.iter().sum();
            if total == 0 {
                return Err(Error::Model(format!("context {:?} has no counts", record.context)));
            }
            if tables[j].insert(record.context.clone(), ContextCounts { next, total }).is_some() {
                return Err(Error::Model(format!("duplicate context {:?}", record.context)));
            }
        }
        if tables[0].is_empty() {
            return Err(Error::Model("missing unigram counts".into()));
        }
        Ok(Self {
            order: file.order,
            smoothing: file.smoothing,
            vocab: file.vocab,
            tables,
        })
    }
}
