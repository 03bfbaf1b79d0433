//! Decoding and loss toolkit for attention-based sequence-to-sequence
//! recognizers: smoothed training targets, tempered softmax, coverage and
//! LM-fused beam search, replay models and error-rate metrics.

pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod ngram;
pub mod replay;
pub mod scorers;
pub mod search;
pub mod smoothing;
pub mod types;

pub use error::{Error, Result};
pub use metrics::{align, corpus_report, ErrorBreakdown};
pub use ngram::{CharNGramLM, LmSmoothing};
pub use replay::{generate_dense, generate_synthetic, PrefixTableModel, StepOutput, SyntheticConfig};
pub use scorers::{composite_score, coverage, eos_allowed, tempered_distribution, ScoreConfig};
pub use search::{beam_search, exhaustive_decode, greedy_decode, BeamConfig, DecodeResult};
pub use smoothing::{
    estimate_marginals, loss_gradient_logits, sequence_loss, target_distribution, SmoothingScheme,
    TargetDistribution,
};
pub use types::{normalize_logits, AttentionTrace, Hypothesis, LogDistribution, ScoreBreakdown, Vocabulary};
