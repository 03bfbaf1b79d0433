//! Inputs shared by the benchmarks.

use seqdec_core::fixtures::{lexicon_corpus, toy_lm, truncation_trap_suite};
use seqdec_core::{CharNGramLM, PrefixTableModel, Vocabulary};

pub struct DecodeInputs {
    pub models: Vec<PrefixTableModel>,
    pub lm: CharNGramLM,
}

pub fn decode_inputs(count: usize) -> DecodeInputs {
    let models = truncation_trap_suite(2, count).expect("fixture suite");
    let lm = toy_lm(models[0].vocab(), 99, 500).expect("toy lm");
    DecodeInputs { models, lm }
}

/// Sentence pairs of similar length for the alignment benchmark.
pub fn sentence_pairs(count: usize) -> Vec<(String, String)> {
    let refs = lexicon_corpus(1, count);
    let hyps = lexicon_corpus(2, count);
    refs.into_iter().zip(hyps).collect()
}

pub fn encoded_corpus(lines: usize) -> (Vocabulary, Vec<Vec<usize>>) {
    let vocab = Vocabulary::wsj();
    let text = lexicon_corpus(3, lines);
    let corpus = seqdec_core::ngram::encode_corpus(text.iter().map(String::as_str), &vocab).expect("in vocabulary");
    (vocab, corpus)
}
