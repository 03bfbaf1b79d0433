//! Beam search, greedy decoding and an exhaustive oracle over replay models.
//!
//! All three use the same scoring path: model log-probabilities come from the
//! tempered distribution, LM log-probabilities are accumulated stepwise from
//! [`CharNGramLM::next_logp`], and coverage is recomputed from the whole
//! attention trace whenever a hypothesis is extended.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::ngram::CharNGramLM;
use crate::replay::PrefixTableModel;
use crate::scorers::{coverage_of_sums, tempered_distribution, ScoreConfig};
use crate::types::{AttentionTrace, Hypothesis, LogDistribution};

/// Largest search space the exhaustive decoder accepts.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Clone, Debug)]
pub struct BeamConfig<'a> {
    pub beam_width: usize,
    /// Maximum hypothesis length in tokens, EOS included.
    pub max_length: usize,
    pub score: ScoreConfig,
    pub lm: Option<&'a CharNGramLM>,
}

impl<'a> BeamConfig<'a> {
    pub fn new(beam_width: usize, max_length: usize, score: ScoreConfig) -> Self {
        Self {
            beam_width,
            max_length,
            score,
            lm: None,
        }
    }

    pub fn with_lm(mut self, lm: &'a CharNGramLM) -> Self {
        self.lm = Some(lm);
        self
    }

    pub fn validate(&self, model: &PrefixTableModel) -> Result<()> {
        if self.beam_width < 1 {
            return Err(Error::Config("beam_width must be >= 1".into()));
        }
        if self.max_length < 1 {
            return Err(Error::Config("max_length must be >= 1".into()));
        }
        self.score.validate()?;
        if let Some(lm) = self.lm {
            if lm.vocab() != model.vocab() {
                return Err(Error::Config(
                    "language model and replay model use different vocabularies".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Candidates scored over the whole search.
    pub expanded: usize,
    /// Candidates discarded by beam pruning.
    pub pruned: usize,
    /// EOS extensions refused by the gate.
    pub eos_blocked: usize,
    /// Search stopped with live hypotheses still in the beam.
    pub max_length_hit: bool,
    /// No hypothesis reached EOS.
    pub no_finished: bool,
}

#[derive(Clone, Debug, Default)]
pub struct DecodeResult {
    /// Finished hypotheses, best first.
    pub hypotheses: Vec<Hypothesis>,
    /// Best live hypothesis when nothing finished.
    pub unfinished: Option<Hypothesis>,
    pub diagnostics: Diagnostics,
}

impl DecodeResult {
    /// Best finished hypothesis, or the best unfinished one.
    pub fn best(&self) -> Option<&Hypothesis> {
        self.hypotheses.first().or(self.unfinished.as_ref())
    }
}

/// Orders by score descending, then token sequence ascending.
pub fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score()
        .total_cmp(&a.score())
        .then_with(|| a.tokens.cmp(&b.tokens))
}

#[derive(Clone)]
struct Live {
    tokens: Vec<usize>,
    model_logp: f64,
    lm_logp: f64,
    trace: AttentionTrace,
}

struct Candidate {
    parent: usize,
    token: usize,
    model_logp: f64,
    lm_logp: f64,
    score: f64,
}

/// Everything needed to extend one hypothesis by one token.
struct Expansion<'m> {
    dist: LogDistribution,
    lm_dist: Option<LogDistribution>,
    attention: &'m [f64],
    column_sums: Vec<f64>,
    eos_ok: bool,
}

fn expand<'m>(
    model: &'m PrefixTableModel,
    cfg: &BeamConfig,
    tokens: &[usize],
    trace: &AttentionTrace,
) -> Result<Expansion<'m>> {
    let step = model.step(tokens)?;
    let dist = tempered_distribution(&step.logits, cfg.score.temperature)?;
    let lm_dist = cfg.lm.map(|lm| lm.next_logp(tokens));
    let mut column_sums = if trace.is_empty() {
        vec![0.0; step.attention.len()]
    } else {
        trace.column_sums()
    };
    for (s, a) in column_sums.iter_mut().zip(&step.attention) {
        *s += a;
    }
    let eos_ok = cfg.score.allows_eos(&dist, model.vocab().eos());
    Ok(Expansion {
        dist,
        lm_dist,
        attention: &step.attention,
        column_sums,
        eos_ok,
    })
}

impl Expansion<'_> {
    fn lm(&self, token: usize) -> f64 {
        self.lm_dist.as_ref().map_or(0.0, |d| d.get(token))
    }
}

fn finish(
    tokens: Vec<usize>,
    model_logp: f64,
    lm_logp: f64,
    trace: AttentionTrace,
    finished: bool,
    score: &ScoreConfig,
) -> Hypothesis {
    let mut hyp = Hypothesis {
        tokens,
        model_logp,
        trace,
        finished,
        breakdown: Default::default(),
    };
    let coverage = coverage_of_sums(&hyp.trace.column_sums(), score.coverage_threshold);
    hyp.breakdown = score.breakdown(model_logp, lm_logp, coverage, hyp.emitted());
    hyp
}

/// Breadth-synchronous beam search.
///
/// At every step all live hypotheses are extended by every token and the
/// candidates ranked. A finished candidate is kept if it ranks within the
/// top `beam_width`; the beam is then refilled with the best `beam_width`
/// live candidates. Finished hypotheses compete in the final ranking.
pub fn beam_search(model: &PrefixTableModel, cfg: &BeamConfig) -> Result<DecodeResult> {
    cfg.validate(model)?;
    let eos = model.vocab().eos();
    let width = cfg.beam_width;
    let mut diagnostics = Diagnostics::default();
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut beam = vec![Live {
        tokens: Vec::new(),
        model_logp: 0.0,
        lm_logp: 0.0,
        trace: AttentionTrace::new(),
    }];

    for _ in 0..cfg.max_length {
        let mut expansions = Vec::with_capacity(beam.len());
        let mut candidates = Vec::new();
        for (parent, live) in beam.iter().enumerate() {
            let ex = expand(model, cfg, &live.tokens, &live.trace)?;
            let coverage = coverage_of_sums(&ex.column_sums, cfg.score.coverage_threshold);
            for token in 0..model.vocab().len() {
                if token == eos && !ex.eos_ok {
                    diagnostics.eos_blocked += 1;
                    continue;
                }
                let model_logp = live.model_logp + ex.dist.get(token);
                let lm_logp = live.lm_logp + ex.lm(token);
                let length = live.tokens.len() + usize::from(token != eos);
                candidates.push(Candidate {
                    parent,
                    token,
                    model_logp,
                    lm_logp,
                    score: cfg.score.combine(model_logp, lm_logp, coverage, length),
                });
            }
            expansions.push(ex);
        }
        diagnostics.expanded += candidates.len();
        candidates.sort_by(|a, b| {
            b.score.total_cmp(&a.score).then_with(|| {
                beam[a.parent]
                    .tokens
                    .cmp(&beam[b.parent].tokens)
                    .then(a.token.cmp(&b.token))
            })
        });

        let mut next = Vec::with_capacity(width);
        for (rank, c) in candidates.iter().enumerate() {
            let is_eos = c.token == eos;
            if (is_eos && rank >= width) || (!is_eos && next.len() >= width) {
                diagnostics.pruned += 1;
                continue;
            }
            let parent = &beam[c.parent];
            let mut tokens = parent.tokens.clone();
            tokens.push(c.token);
            let mut trace = parent.trace.clone();
            trace.push(expansions[c.parent].attention.to_vec())?;
            if is_eos {
                finished.push(finish(tokens, c.model_logp, c.lm_logp, trace, true, &cfg.score));
            } else {
                next.push(Live {
                    tokens,
                    model_logp: c.model_logp,
                    lm_logp: c.lm_logp,
                    trace,
                });
            }
        }
        beam = next;
        if beam.is_empty() {
            break;
        }
    }

    diagnostics.max_length_hit = !beam.is_empty();
    finished.sort_by(rank);
    let unfinished = if finished.is_empty() {
        diagnostics.no_finished = true;
        beam.into_iter()
            .map(|l| finish(l.tokens, l.model_logp, l.lm_logp, l.trace, false, &cfg.score))
            .min_by(rank)
    } else {
        None
    };
    Ok(DecodeResult {
        hypotheses: finished,
        unfinished,
        diagnostics,
    })
}

/// Follows the most probable token until EOS or `max_length` tokens.
pub fn greedy_decode(model: &PrefixTableModel, temperature: f64, max_length: usize) -> Result<Hypothesis> {
    let eos = model.vocab().eos();
    let score = ScoreConfig {
        temperature,
        ..ScoreConfig::default()
    };
    score.validate()?;
    let mut tokens = Vec::new();
    let mut model_logp = 0.0;
    let mut trace = AttentionTrace::new();
    while tokens.len() < max_length {
        let step = model.step(&tokens)?;
        let dist = tempered_distribution(&step.logits, temperature)?;
        let token = dist.argmax();
        model_logp += dist.get(token);
        trace.push(step.attention.clone())?;
        tokens.push(token);
        if token == eos {
            return Ok(finish(tokens, model_logp, 0.0, trace, true, &score));
        }
    }
    Ok(finish(tokens, model_logp, 0.0, trace, false, &score))
}

/// Scores every EOS-terminated sequence of at most `max_length` tokens.
pub fn exhaustive_decode(model: &PrefixTableModel, cfg: &BeamConfig, max_length: usize) -> Result<DecodeResult> {
    cfg.validate(model)?;
    let size = model.vocab().len() as u128;
    let space = u32::try_from(max_length)
        .ok()
        .and_then(|n| size.checked_pow(n))
        .unwrap_or(u128::MAX);
    if space > EXHAUSTIVE_LIMIT {
        return Err(Error::SearchSpace {
            size: space,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut out = DecodeResult::default();
    let root = Live {
        tokens: Vec::new(),
        model_logp: 0.0,
        lm_logp: 0.0,
        trace: AttentionTrace::new(),
    };
    enumerate(model, cfg, max_length, root, &mut out)?;
    out.hypotheses.sort_by(rank);
    out.diagnostics.no_finished = out.hypotheses.is_empty();
    Ok(out)
}

fn enumerate(
    model: &PrefixTableModel,
    cfg: &BeamConfig,
    max_length: usize,
    live: Live,
    out: &mut DecodeResult,
) -> Result<()> {
    if live.tokens.len() >= max_length {
        out.diagnostics.max_length_hit = true;
        return Ok(());
    }
    let eos = model.vocab().eos();
    let ex = expand(model, cfg, &live.tokens, &live.trace)?;
    let mut trace = live.trace.clone();
    trace.push(ex.attention.to_vec())?;
    for token in 0..model.vocab().len() {
        out.diagnostics.expanded += 1;
        let model_logp = live.model_logp + ex.dist.get(token);
        let lm_logp = live.lm_logp + ex.lm(token);
        let mut tokens = live.tokens.clone();
        tokens.push(token);
        if token == eos {
            if ex.eos_ok {
                out.hypotheses
                    .push(finish(tokens, model_logp, lm_logp, trace.clone(), true, &cfg.score));
            } else {
                out.diagnostics.eos_blocked += 1;
            }
        } else {
            let child = Live {
                tokens,
                model_logp,
                lm_logp,
                trace: trace.clone(),
            };
            enumerate(model, cfg, max_length, child, out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::{generate_dense, generate_synthetic, StepOutput, SyntheticConfig};
    use crate::scorers::composite_score;
    use crate::types::Vocabulary;
    use std::collections::BTreeMap;

    fn entry(logits: &[f64], attention: &[f64]) -> StepOutput {
        StepOutput {
            logits: logits.to_vec(),
            attention: attention.to_vec(),
        }
    }

    /// `a` then EOS is the greedy path; stopping at once is the runner-up.
    fn two_step() -> PrefixTableModel {
        let v = Vocabulary::from_symbols("ab", '$').unwrap();
        let mut t = BTreeMap::new();
        t.insert(vec![], entry(&[2.0, 0.0, 1.5], &[1.0, 0.0]));
        t.insert(vec![0], entry(&[0.0, 0.0, 4.0], &[0.0, 1.0]));
        t.insert(vec![1], entry(&[0.0, 0.0, 4.0], &[0.0, 1.0]));
        PrefixTableModel::new(v, 2, t, vec![0]).unwrap()
    }

    #[test]
    fn width_one_matches_greedy() {
        let m = two_step().with_fallback(true);
        let greedy = greedy_decode(&m, 1.0, 5).unwrap();
        assert_eq!(greedy.tokens, vec![0, 2]);
        let beam = beam_search(&m, &BeamConfig::new(1, 5, ScoreConfig::default())).unwrap();
        assert_eq!(beam.best().unwrap().tokens, greedy.tokens);
        assert!((beam.best().unwrap().model_logp - greedy.model_logp).abs() < 1e-12);
    }

    #[test]
    fn greedy_stops_on_root_eos() {
        let v = Vocabulary::from_symbols("ab", '$').unwrap();
        let mut t = BTreeMap::new();
        t.insert(vec![], entry(&[0.0, 0.0, 1.0], &[1.0]));
        let m = PrefixTableModel::new(v, 1, t, vec![]).unwrap();
        let h = greedy_decode(&m, 1.0, 4).unwrap();
        assert_eq!(h.tokens, vec![2]);
        assert!(h.finished);
        assert_eq!(h.emitted(), 0);
    }

    #[test]
    fn greedy_hits_max_length() {
        let m = two_step().with_fallback(true);
        let h = greedy_decode(&m, 1.0, 1).unwrap();
        assert_eq!(h.tokens, vec![0]);
        assert!(!h.finished);
    }

    #[test]
    fn unknown_prefix_surfaces_as_error() {
        let v = Vocabulary::from_symbols("ab", '$').unwrap();
        let mut t = BTreeMap::new();
        t.insert(vec![], entry(&[1.0, 0.0, 0.0], &[1.0]));
        let m = PrefixTableModel::new(v, 1, t, vec![]).unwrap();
        let err = beam_search(&m, &BeamConfig::new(2, 3, ScoreConfig::default())).unwrap_err();
        assert!(matches!(err, Error::UnknownPrefix(_)));
    }

    #[test]
    fn gate_blocking_everything_is_flagged() {
        let m = two_step().with_fallback(true);
        let score = ScoreConfig {
            eos_gate: true,
            eos_margin: 0.0,
            ..ScoreConfig::default()
        };
        // with margin 0 only an argmax EOS passes; the root's EOS is not argmax
        let r = beam_search(&m, &BeamConfig::new(1, 1, score)).unwrap();
        assert!(r.hypotheses.is_empty());
        assert!(r.diagnostics.no_finished);
        assert!(r.diagnostics.max_length_hit);
        assert!(r.diagnostics.eos_blocked > 0);
        assert_eq!(r.best().unwrap().tokens, vec![0]);
    }

    #[test]
    fn invalid_configs() {
        let m = two_step();
        assert!(beam_search(&m, &BeamConfig::new(0, 3, ScoreConfig::default())).is_err());
        assert!(beam_search(&m, &BeamConfig::new(1, 0, ScoreConfig::default())).is_err());
        let v = Vocabulary::wsj_prefix(6).unwrap();
        let dense = generate_dense(0, &v, 2, 2, 1.0).unwrap();
        let err = exhaustive_decode(&dense, &BeamConfig::new(1, 9, ScoreConfig::default()), 9).unwrap_err();
        assert!(matches!(err, Error::SearchSpace { .. }));
    }

    #[test]
    fn breakdown_recomputes_to_score() {
        let v = Vocabulary::from_symbols("abc", '$').unwrap();
        let m = generate_dense(9, &v, 3, 3, 2.0).unwrap();
        let score = ScoreConfig {
            coverage_weight: 0.7,
            length_bonus: 0.3,
            ..ScoreConfig::default()
        };
        let r = beam_search(&m, &BeamConfig::new(4, 4, score.clone())).unwrap();
        assert!(!r.hypotheses.is_empty());
        for h in &r.hypotheses {
            let again = composite_score(h, h.breakdown.lm, &score);
            assert!((again.total - h.score()).abs() < 1e-9);
            assert_eq!(h.trace.len(), h.tokens.len());
            assert_eq!(*h.tokens.last().unwrap(), v.eos());
        }
        for w in r.hypotheses.windows(2) {
            assert_ne!(rank(&w[0], &w[1]), Ordering::Greater);
        }
    }

    #[test]
    fn model_logp_is_sum_of_step_log_probs() {
        let m = generate_synthetic(&SyntheticConfig {
            seed: 1,
            sharpness: 3.0,
            ..Default::default()
        })
        .unwrap();
        let r = beam_search(&m, &BeamConfig::new(5, 30, ScoreConfig { temperature: 1.3, ..Default::default() })).unwrap();
        for h in &r.hypotheses {
            let mut total = 0.0;
            for i in 0..h.tokens.len() {
                let d = tempered_distribution(&m.step(&h.tokens[..i]).unwrap().logits, 1.3).unwrap();
                total += d.get(h.tokens[i]);
            }
            assert!((total - h.model_logp).abs() < 1e-9);
        }
    }
}
