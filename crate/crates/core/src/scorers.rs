//! Score terms combined by the decoder.
//!
//! The decoding criterion is maximized:
//!
//! ```text
//! score = log p(y|x) + lm_weight * log p_lm(y) + coverage_weight * coverage + length_bonus * |y|
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_finite, log_softmax, AttentionTrace, Hypothesis, LogDistribution, ScoreBreakdown};

/// Default EOS gate width in nats (a probability ratio of about 10).
pub const DEFAULT_EOS_MARGIN: f64 = 2.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub lm_weight: f64,
    pub coverage_weight: f64,
    pub coverage_threshold: f64,
    pub length_bonus: f64,
    pub temperature: f64,
    /// `null` in JSON stands for an unbounded margin.
    #[serde(with = "unbounded")]
    pub eos_margin: f64,
    pub eos_gate: bool,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            lm_weight: 0.0,
            coverage_weight: 0.0,
            coverage_threshold: 0.5,
            length_bonus: 0.0,
            temperature: 1.0,
            eos_margin: DEFAULT_EOS_MARGIN,
            eos_gate: false,
        }
    }
}

impl ScoreConfig {
    /// The typical LM-fused setting: `lm_weight = 0.5`, `coverage_weight = 1.5`,
    /// `coverage_threshold = 0.5`.
    pub fn lm_fused() -> Self {
        Self {
            lm_weight: 0.5,
            coverage_weight: 1.5,
            coverage_threshold: 0.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_non_negative = [
            ("lm_weight", self.lm_weight),
            ("coverage_weight", self.coverage_weight),
            ("length_bonus", self.length_bonus),
        ];
        for (name, v) in finite_non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.coverage_threshold > 0.0 && self.coverage_threshold < 1.0) {
            return Err(Error::Config(format!(
                "coverage_threshold must be in (0, 1), got {}",
                self.coverage_threshold
            )));
        }
        // +inf is accepted and disables the gate
        if self.eos_margin.is_nan() || self.eos_margin < 0.0 {
            return Err(Error::Config(format!(
                "eos_margin must be >= 0, got {}",
                self.eos_margin
            )));
        }
        Ok(())
    }

    /// Weighted sum of the raw terms.
    pub fn combine(&self, model: f64, lm: f64, coverage: usize, length: usize) -> f64 {
        // 0 * -inf would be NaN
        let lm_term = if self.lm_weight == 0.0 { 0.0 } else { self.lm_weight * lm };
        model + lm_term + self.coverage_weight * coverage as f64 + self.length_bonus * length as f64
    }

    pub fn breakdown(&self, model: f64, lm: f64, coverage: usize, length: usize) -> ScoreBreakdown {
        ScoreBreakdown {
            model,
            lm,
            coverage,
            length,
            total: self.combine(model, lm, coverage, length),
        }
    }

    /// Whether EOS may be emitted from `dist` under this config.
    pub fn allows_eos(&self, dist: &LogDistribution, eos_index: usize) -> bool {
        !self.eos_gate || eos_allowed(dist, self.eos_margin, eos_index)
    }
}

/// Softmax of `logits / temperature`.
pub fn tempered_distribution(logits: &[f64], temperature: f64) -> Result<LogDistribution> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be > 0, got {temperature}")));
    }
    check_finite(logits)?;
    if logits.is_empty() {
        return Err(Error::Config("empty logit vector".into()));
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    LogDistribution::from_log_probs(log_softmax(&scaled))
}

/// Number of frames whose cumulative attention exceeds `threshold`.
pub fn coverage(trace: &AttentionTrace, threshold: f64) -> usize {
    coverage_of_sums(&trace.column_sums(), threshold)
}

pub(crate) fn coverage_of_sums(column_sums: &[f64], threshold: f64) -> usize {
    column_sums.iter().filter(|&&s| s > threshold).count()
}

/// Checks the rows before counting; the raw trace type already rejects
/// ragged input, so this is for rows coming straight from a caller.
pub fn coverage_of_rows(rows: &[Vec<f64>], threshold: f64) -> Result<usize> {
    if let Some(first) = rows.first() {
        if let Some(bad) = rows.iter().find(|r| r.len() != first.len()) {
            return Err(Error::Trace(format!(
                "ragged rows: widths {} and {}",
                first.len(),
                bad.len()
            )));
        }
    }
    let width = rows.first().map_or(0, Vec::len);
    let mut sums = vec![0.0; width];
    for row in rows {
        for (s, a) in sums.iter_mut().zip(row) {
            *s += a;
        }
    }
    Ok(coverage_of_sums(&sums, threshold))
}

/// True iff `log p(eos) >= max log p - margin`.
pub fn eos_allowed(dist: &LogDistribution, margin: f64, eos_index: usize) -> bool {
    if margin == f64::INFINITY {
        return true;
    }
    let best = dist.get(dist.argmax());
    dist.get(eos_index) >= best - margin
}

/// Scores `hyp` with its accumulated model log-probability, coverage of its
/// trace, emitted length and the supplied LM log-probability.
pub fn composite_score(hyp: &Hypothesis, lm_logp: f64, cfg: &ScoreConfig) -> ScoreBreakdown {
    cfg.breakdown(
        hyp.model_logp,
        lm_logp,
        coverage(&hyp.trace, cfg.coverage_threshold),
        hyp.emitted(),
    )
}
