//! Smoothed training targets and the per-utterance cross-entropy loss.
//!
//! A target distribution assigns `beta` to the correct token and spreads the
//! remaining `1 - beta` according to the scheme:
//!
//! * `Uniform`: over the whole vocabulary (the correct token included).
//! * `Unigram`: proportionally to corpus marginals (the correct token included).
//! * `Neighborhood`: over the tokens found at fixed offsets from the current
//!   position in the transcript, weighted per offset. Offsets that fall
//!   outside the transcript are dropped and the weights renormalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_finite, log_softmax, LogDistribution, Vocabulary};

/// Offset weights `±1 : ±2 = 5 : 2`.
pub const DEFAULT_NEIGHBORS: [(isize, f64); 4] = [(-2, 2.0), (-1, 5.0), (1, 5.0), (2, 2.0)];

/// Correct-token mass used with neighborhood smoothing.
pub const NEIGHBORHOOD_BETA: f64 = 0.9;

/// Correct-token mass used with unigram smoothing.
pub const UNIGRAM_BETA: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothingScheme {
    Hard,
    Uniform {
        beta: f64,
    },
    Unigram {
        beta: f64,
        marginals: Vec<f64>,
    },
    Neighborhood {
        beta: f64,
        #[serde(default = "default_neighbors")]
        neighbors: Vec<(isize, f64)>,
    },
}

fn default_neighbors() -> Vec<(isize, f64)> {
    DEFAULT_NEIGHBORS.to_vec()
}

impl SmoothingScheme {
    pub fn neighborhood(beta: f64) -> Self {
        SmoothingScheme::Neighborhood {
            beta,
            neighbors: default_neighbors(),
        }
    }

    pub fn beta(&self) -> f64 {
        match self {
            SmoothingScheme::Hard => 1.0,
            SmoothingScheme::Uniform { beta }
            | SmoothingScheme::Unigram { beta, .. }
            | SmoothingScheme::Neighborhood { beta, .. } => *beta,
        }
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        let beta = self.beta();
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Config(format!("beta must be in (0, 1], got {beta}")));
        }
        match self {
            SmoothingScheme::Unigram { marginals, .. } => {
                if marginals.len() != vocab.len() {
                    return Err(Error::LengthMismatch {
                        expected: vocab.len(),
                        actual: marginals.len(),
                    });
                }
                if marginals.iter().any(|m| !m.is_finite() || *m < 0.0) {
                    return Err(Error::Config("marginals must be non-negative".into()));
                }
                let total: f64 = marginals.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!("marginals sum to {total}")));
                }
            }
            SmoothingScheme::Neighborhood { neighbors, .. } => {
                for (i, &(offset, weight)) in neighbors.iter().enumerate() {
                    if offset == 0 {
                        return Err(Error::Config("neighbor offset 0 is the correct token".into()));
                    }
                    if !(weight.is_finite() && weight > 0.0) {
                        return Err(Error::Config(format!("neighbor weight {weight} must be positive")));
                    }
                    if neighbors[..i].iter().any(|&(o, _)| o == offset) {
                        return Err(Error::Config(format!("duplicate neighbor offset {offset}")));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Per-token training target for one transcript position.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetDistribution {
    probs: Vec<f64>,
}

impl TargetDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config("target masses must be non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("target sums to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn one_hot(index: usize, size: usize) -> Self {
        let mut probs = vec![0.0; size];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }
}

pub fn target_distribution(
    scheme: &SmoothingScheme,
    transcript: &[usize],
    position: usize,
    vocab: &Vocabulary,
) -> Result<TargetDistribution> {
    scheme.validate(vocab)?;
    if position >= transcript.len() {
        return Err(Error::PositionOutOfRange {
            position,
            len: transcript.len(),
        });
    }
    for &t in transcript {
        vocab.check(t)?;
    }
    let size = vocab.len();
    let correct = transcript[position];
    let beta = scheme.beta();
    if beta == 1.0 {
        return Ok(TargetDistribution::one_hot(correct, size));
    }

    let mut probs = vec![0.0; size];
    probs[correct] = beta;
    let rest = 1.0 - beta;
    match scheme {
        SmoothingScheme::Hard => unreachable!("hard targets have beta = 1"),
        SmoothingScheme::Uniform { .. } => {
            let share = rest / size as f64;
            probs.iter_mut().for_each(|p| *p += share);
        }
        SmoothingScheme::Unigram { marginals, .. } => {
            for (p, m) in probs.iter_mut().zip(marginals) {
                *p += rest * m;
            }
        }
        SmoothingScheme::Neighborhood { neighbors, .. } => {
            let present: Vec<(usize, f64)> = neighbors
                .iter()
                .filter_map(|&(offset, weight)| {
                    position
                        .checked_add_signed(offset)
                        .filter(|&j| j < transcript.len())
                        .map(|j| (transcript[j], weight))
                })
                .collect();
            let total: f64 = present.iter().map(|(_, w)| w).sum();
            if present.is_empty() {
                probs[correct] = 1.0;
            } else {
                for (token, weight) in present {
                    probs[token] += rest * weight / total;
                }
            }
        }
    }
    Ok(TargetDistribution { probs })
}

/// Targets for every position of `transcript`.
pub fn target_sequence(
    scheme: &SmoothingScheme,
    transcript: &[usize],
    vocab: &Vocabulary,
) -> Result<Vec<TargetDistribution>> {
    (0..transcript.len())
        .map(|i| target_distribution(scheme, transcript, i, vocab))
        .collect()
}

/// Add-one smoothed relative token frequencies.
pub fn estimate_marginals(corpus: &[Vec<usize>], vocab: &Vocabulary) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts = vec![1.0f64; vocab.len()];
    for &t in corpus.iter().flatten() {
        vocab.check(t)?;
        counts[t] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    Ok(counts.into_iter().map(|c| c / total).collect())
}

/// Cross-entropy of the predictions against the targets, summed over positions.
pub fn sequence_loss(targets: &[TargetDistribution], predictions: &[LogDistribution]) -> Result<f64> {
    if targets.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            actual: predictions.len(),
        });
    }
    let mut loss = 0.0;
    for (target, pred) in targets.iter().zip(predictions) {
        if target.len() != pred.len() {
            return Err(Error::LengthMismatch {
                expected: target.len(),
                actual: pred.len(),
            });
        }
        for (&t, &lp) in target.probs().iter().zip(pred.log_probs()) {
            // 0 * log 0 contributes nothing.
            if t > 0.0 {
                loss -= t * lp;
            }
        }
    }
    Ok(loss)
}

/// Gradient of one position's cross-entropy with respect to its logits:
/// `softmax(logits) - target`.
pub fn loss_gradient_logits(logits: &[f64], target: &TargetDistribution) -> Result<Vec<f64>> {
    if logits.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            actual: logits.len(),
        });
    }
    check_finite(logits)?;
    Ok(log_softmax(logits)
        .into_iter()
        .zip(target.probs())
        .map(|(lp, t)| lp.exp() - t)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::normalize_logits;
    use proptest::prelude::*;

    fn letters() -> Vocabulary {
        Vocabulary::from_symbols("abcde", '$').unwrap()
    }

    #[test]
    fn hard_target_is_one_hot() {
        let v = letters();
        let t = target_distribution(&SmoothingScheme::Hard, &[3, 1], 0, &v).unwrap();
        assert_eq!(t.probs(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.entropy(), 0.0);
    }

    #[test]
    fn neighborhood_interior_position() {
        let v = letters();
        let abcde = v.encode("abcde").unwrap();
        let t = target_distribution(&SmoothingScheme::neighborhood(0.9), &abcde, 2, &v).unwrap();
        let expected = [0.1 * 2.0 / 14.0, 0.1 * 5.0 / 14.0, 0.9, 0.1 * 5.0 / 14.0, 0.1 * 2.0 / 14.0, 0.0];
        for (a, b) in t.probs().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((t.probs()[1] - 0.035714).abs() < 1e-6);
        assert!((t.probs()[0] - 0.014286).abs() < 1e-6);
    }

    #[test]
    fn neighborhood_boundary_renormalizes() {
        let v = letters();
        let t = target_distribution(&SmoothingScheme::neighborhood(0.9), &[0, 1], 0, &v).unwrap();
        assert!((t.probs()[0] - 0.9).abs() < 1e-12);
        assert!((t.probs()[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn neighborhood_single_token_keeps_all_mass() {
        let v = letters();
        let t = target_distribution(&SmoothingScheme::neighborhood(0.9), &[4], 0, &v).unwrap();
        assert_eq!(t.probs()[4], 1.0);
    }

    #[test]
    fn colliding_neighbors_accumulate() {
        let v = letters();
        let aba = v.encode("aba").unwrap();
        let t = target_distribution(&SmoothingScheme::neighborhood(0.9), &aba, 1, &v).unwrap();
        assert!((t.probs()[0] - 0.1).abs() < 1e-12);
        assert!((t.probs()[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn uniform_mixture() {
        let v = Vocabulary::wsj_prefix(20).unwrap();
        let t = target_distribution(&SmoothingScheme::Uniform { beta: 0.95 }, &[0], 0, &v).unwrap();
        assert!((t.probs()[0] - 0.9525).abs() < 1e-12);
        for &p in &t.probs()[1..] {
            assert!((p - 0.0025).abs() < 1e-12);
        }
    }

    #[test]
    fn unigram_mixture() {
        let v = Vocabulary::from_symbols("ab", '$').unwrap();
        let scheme = SmoothingScheme::Unigram {
            beta: 0.9,
            marginals: vec![0.5, 0.25, 0.25],
        };
        let t = target_distribution(&scheme, &[1], 0, &v).unwrap();
        let expected = [0.05, 0.925, 0.025];
        for (a, b) in t.probs().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_inputs() {
        let v = letters();
        assert!(matches!(
            target_distribution(&SmoothingScheme::Hard, &[0, 1], 2, &v),
            Err(Error::PositionOutOfRange { position: 2, len: 2 })
        ));
        assert!(target_distribution(&SmoothingScheme::Uniform { beta: 0.0 }, &[0], 0, &v).is_err());
        assert!(target_distribution(&SmoothingScheme::Uniform { beta: 1.2 }, &[0], 0, &v).is_err());
        let dup = SmoothingScheme::Neighborhood {
            beta: 0.9,
            neighbors: vec![(1, 1.0), (1, 2.0)],
        };
        assert!(target_distribution(&dup, &[0, 1], 0, &v).is_err());
        let zero = SmoothingScheme::Neighborhood {
            beta: 0.9,
            neighbors: vec![(0, 1.0)],
        };
        assert!(target_distribution(&zero, &[0, 1], 0, &v).is_err());
        let bad_marginals = SmoothingScheme::Unigram {
            beta: 0.9,
            marginals: vec![0.5; 6],
        };
        assert!(target_distribution(&bad_marginals, &[0], 0, &v).is_err());
        assert!(target_distribution(&SmoothingScheme::Hard, &[9], 0, &v).is_err());
    }

    #[test]
    fn marginals_from_tiny_corpus() {
        let v = Vocabulary::from_symbols("ab", '$').unwrap();
        let m = estimate_marginals(&[v.encode("aab").unwrap()], &v).unwrap();
        assert!((m[0] - 0.5).abs() < 1e-12);
        assert!((m[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((m[2] - 1.0 / 6.0).abs() < 1e-12);

        let flat = estimate_marginals(&[vec![0, 1, 2, 2, 1, 0]], &v).unwrap();
        assert!(flat.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));

        let b = estimate_marginals(&[vec![1]], &v).unwrap();
        assert!(b[1] > b[0] && b[1] > b[2]);

        assert!(matches!(estimate_marginals(&[], &v), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn loss_examples() {
        let perfect = LogDistribution::from_log_probs(vec![0.0, f64::NEG_INFINITY]).unwrap();
        let hot = TargetDistribution::one_hot(0, 2);
        assert_eq!(sequence_loss(&[hot], &[perfect]).unwrap(), 0.0);

        let uniform = normalize_logits(&[0.0; 4]).unwrap();
        let hot = TargetDistribution::one_hot(2, 4);
        let one = sequence_loss(std::slice::from_ref(&hot), std::slice::from_ref(&uniform)).unwrap();
        assert!((one - 4f64.ln()).abs() < 1e-12);
        let two = sequence_loss(&[hot.clone(), hot], &[uniform.clone(), uniform]).unwrap();
        assert!((two - 2.0 * 4f64.ln()).abs() < 1e-12);

        assert!(sequence_loss(&[TargetDistribution::one_hot(0, 2)], &[]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = loss_gradient_logits(&[0.0, 0.0], &TargetDistribution::one_hot(0, 2)).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-12 && (g[1] - 0.5).abs() < 1e-12);

        let logits = [1.0, -2.0, 0.5];
        let p = normalize_logits(&logits).unwrap().probs();
        let g = loss_gradient_logits(&logits, &TargetDistribution::new(p).unwrap()).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn gradient_vanishes_for_confident_correct_prediction() {
        let mut logits = vec![0.0; 30];
        logits[7] = 21.0;
        let g = loss_gradient_logits(&logits, &TargetDistribution::one_hot(7, 30)).unwrap();
        let norm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(norm < 1e-6, "{norm}");
    }

    fn scheme_strategy(vocab_len: usize) -> impl Strategy<Value = SmoothingScheme> {
        let beta = prop::sample::select(vec![0.8, 0.9, 0.95, 1.0]);
        prop_oneof![
            Just(SmoothingScheme::Hard),
            beta.clone().prop_map(|beta| SmoothingScheme::Uniform { beta }),
            (beta.clone(), prop::collection::vec(0.01f64..1.0, vocab_len)).prop_map(|(beta, raw)| {
                let total: f64 = raw.iter().sum();
                SmoothingScheme::Unigram {
                    beta,
                    marginals: raw.iter().map(|r| r / total).collect(),
                }
            }),
            beta.prop_map(SmoothingScheme::neighborhood),
        ]
    }

    proptest! {
        #[test]
        fn targets_are_distributions(
            (scheme, transcript, position) in scheme_strategy(6).prop_flat_map(|s| {
                prop::collection::vec(0usize..6, 1..12)
                    .prop_flat_map(move |t| {
                        let n = t.len();
                        (Just(s.clone()), Just(t), 0..n)
                    })
            })
        ) {
            let v = letters();
            let t = target_distribution(&scheme, &transcript, position, &v).unwrap();
            let total: f64 = t.probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(t.probs().iter().all(|p| *p >= 0.0));

            let hard = target_distribution(&SmoothingScheme::Hard, &transcript, position, &v).unwrap();
            if scheme.beta() == 1.0 {
                prop_assert_eq!(&t, &hard);
            } else {
                // a neighbor only smooths when it carries a different token
                let has_neighbor = [-2isize, -1, 1, 2].iter().any(|&o| {
                    position
                        .checked_add_signed(o)
                        .and_then(|j| transcript.get(j))
                        .is_some_and(|&t| t != transcript[position])
                });
                let smoothed = !matches!(scheme, SmoothingScheme::Neighborhood { .. }) || has_neighbor;
                if smoothed {
                    prop_assert!(t.entropy() > 0.0);
                }
            }
        }
    }
}
