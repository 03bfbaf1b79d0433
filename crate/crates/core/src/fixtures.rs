//! Seed-pinned fixture sets used by the acceptance suite, the CLI and the
//! benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ngram::{encode_corpus, CharNGramLM, LmSmoothing};
use crate::replay::{generate_synthetic, lexicon_sentence, PrefixTableModel, SyntheticConfig};
use crate::types::Vocabulary;

/// A transcript with externally supplied LM and model log-probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredTranscript {
    pub text: &'static str,
    pub lm_logp: f64,
    pub model_logp: f64,
}

/// A failed wide-beam decode with a trigram LM: the ground truth (first row)
/// is the least probable transcript under both the network and the LM.
pub const INCOMPLETE_TRANSCRIPTS: [ScoredTranscript; 5] = [
    ScoredTranscript {
        text: "chase is nigeria's registrar and the society is an independent organization hired to count votes",
        lm_logp: -108.5,
        model_logp: -34.5,
    },
    ScoredTranscript {
        text: "in the society is an independent organization hired to count votes",
        lm_logp: -64.6,
        model_logp: -19.9,
    },
    ScoredTranscript {
        text: "chase is nigeria's registrar",
        lm_logp: -40.6,
        model_logp: -31.2,
    },
    ScoredTranscript {
        text: "chase's nature is register",
        lm_logp: -37.8,
        model_logp: -20.3,
    },
    ScoredTranscript {
        text: "",
        lm_logp: -3.5,
        model_logp: -12.5,
    },
];

/// Base config of the overconfident suite: sharpness 20 and one planted
/// confident substitution per model.
pub fn overconfident_config(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        seed,
        sharpness: 20.0,
        confusions: 1,
        ..SyntheticConfig::default()
    }
}

/// Base config of the truncation-trap suite: a softer model with an early
/// EOS runner-up and a repeat-the-last-word runner-up at the end.
pub fn truncation_trap_config(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        seed,
        sharpness: 8.0,
        truncation_trap: true,
        loop_trap: true,
        ..SyntheticConfig::default()
    }
}

/// Seed of the `index`-th model of a suite.
pub fn model_seed(suite_seed: u64, index: usize) -> u64 {
    suite_seed.wrapping_mul(1000).wrapping_add(index as u64)
}

pub fn suite(
    base: fn(u64) -> SyntheticConfig,
    seed: u64,
    count: usize,
) -> Result<Vec<PrefixTableModel>> {
    (0..count).map(|i| generate_synthetic(&base(model_seed(seed, i)))).collect()
}

pub fn overconfident_suite(seed: u64, count: usize) -> Result<Vec<PrefixTableModel>> {
    suite(overconfident_config, seed, count)
}

pub fn truncation_trap_suite(seed: u64, count: usize) -> Result<Vec<PrefixTableModel>> {
    suite(truncation_trap_config, seed, count)
}

/// Sentences drawn from the synthetic lexicon, 8 to 40 characters long.
pub fn lexicon_corpus(seed: u64, lines: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..lines)
        .map(|_| {
            let len = rng.gen_range(8..=40);
            lexicon_sentence(&mut rng, len)
        })
        .collect()
}

/// Trigram stupid-backoff LM over [`lexicon_corpus`].
pub fn toy_lm(vocab: &Vocabulary, seed: u64, lines: usize) -> Result<CharNGramLM> {
    let text = lexicon_corpus(seed, lines);
    let corpus = encode_corpus(text.iter().map(String::as_str), vocab)?;
    CharNGramLM::train(&corpus, vocab, 3, LmSmoothing::stupid_backoff())
}
