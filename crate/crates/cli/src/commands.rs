//! Subcommand implementations. Each returns the bytes it would write so the
//! output can be checked without touching the filesystem.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use seqdec_core::fixtures::{lexicon_corpus, model_seed};
use seqdec_core::metrics::{char_errors, format_rate, text_report, word_errors, CSV_HEADER};
use seqdec_core::ngram::encode_corpus;
use seqdec_core::{
    beam_search, generate_synthetic, BeamConfig, CharNGramLM, ErrorBreakdown, Hypothesis, LmSmoothing,
    ScoreConfig, SyntheticConfig, Vocabulary,
};

use crate::config::{utterance_id, ExperimentConfig, Manifest, ManifestEntry, Utterance, MANIFEST_VERSION};

/// EOS runner-up margin used to flag trapped models in the manifest.
pub const TRAP_MARGIN: f64 = 0.5;

pub struct GenRequest {
    pub base: SyntheticConfig,
    pub count: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub corpus_lines: usize,
    pub corpus_seed: u64,
}

/// Writes `count` models, `manifest.json` and optionally `corpus.txt`.
pub fn gen(req: &GenRequest) -> Result<Manifest> {
    req.base.validate()?;
    fs::create_dir_all(&req.out).with_context(|| format!("creating {}", req.out.display()))?;
    let mut models = Vec::with_capacity(req.count);
    for i in 0..req.count {
        let seed = model_seed(req.seed, i);
        let model = generate_synthetic(&SyntheticConfig { seed, ..req.base.clone() })?;
        let id = utterance_id(i);
        let file = format!("{id}.jsonl");
        let path = req.out.join(&file);
        model.save(&path).with_context(|| format!("writing {}", path.display()))?;
        models.push(ManifestEntry {
            id,
            file,
            seed,
            reference: model.reference_text(),
            trapped: model.has_truncation_trap(TRAP_MARGIN),
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed: req.seed,
        generator: SyntheticConfig { seed: req.seed, ..req.base.clone() },
        models,
    };
    let path = req.out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    if req.corpus_lines > 0 {
        let mut text = lexicon_corpus(req.corpus_seed, req.corpus_lines).join("\n");
        text.push('\n');
        let path = req.out.join("corpus.txt");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(manifest)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn read_corpus(path: &Path, vocab: &Vocabulary) -> Result<Vec<Vec<usize>>> {
    let lines = read_lines(path)?;
    encode_corpus(lines.iter().map(String::as_str), vocab).with_context(|| format!("encoding {}", path.display()))
}

pub fn lm_train(
    corpus: &Path,
    vocab: &Vocabulary,
    order: usize,
    smoothing: LmSmoothing,
    out: &Path,
) -> Result<CharNGramLM> {
    let data = read_corpus(corpus, vocab)?;
    let lm = CharNGramLM::train(&data, vocab, order, smoothing)?;
    lm.save(out).with_context(|| format!("writing {}", out.display()))?;
    Ok(lm)
}

pub fn lm_ppl(lm: &Path, corpus: &Path) -> Result<f64> {
    let lm = CharNGramLM::load(lm).with_context(|| format!("loading LM {}", lm.display()))?;
    let data = read_corpus(corpus, lm.vocab())?;
    Ok(lm.perplexity(&data)?)
}

fn pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SEQDEC_THREADS") {
        let n: usize = v.parse().with_context(|| format!("SEQDEC_THREADS must be a number, got {v:?}"))?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

struct Decoded {
    best: Hypothesis,
    word: ErrorBreakdown,
    char: ErrorBreakdown,
    reference: String,
    transcript: String,
}

/// Decodes every utterance; results come back in input order.
fn decode_utterances(
    pool: &rayon::ThreadPool,
    utts: &[Utterance],
    lm: Option<&CharNGramLM>,
    beam_width: usize,
    max_length: usize,
    score: &ScoreConfig,
) -> Result<Vec<Decoded>> {
    pool.install(|| {
        utts.par_iter()
            .map(|u| {
                let mut cfg = BeamConfig::new(beam_width, max_length, score.clone());
                if let Some(lm) = lm {
                    cfg = cfg.with_lm(lm);
                }
                let result = beam_search(&u.model, &cfg).with_context(|| format!("decoding {}", u.id))?;
                let best = result.best().cloned().unwrap_or_else(Hypothesis::empty);
                let reference = u.model.reference_text();
                let transcript = u.model.vocab().decode(&best.tokens);
                Ok(Decoded {
                    word: word_errors(&reference, &transcript),
                    char: char_errors(&reference, &transcript),
                    best,
                    reference,
                    transcript,
                })
            })
            .collect()
    })
}

fn finish_csv(writer: csv::Writer<Vec<u8>>, config_json: &str) -> Result<Vec<u8>> {
    let mut bytes = writer.into_inner().map_err(|e| anyhow::anyhow!("flushing CSV: {e}"))?;
    bytes.extend_from_slice(format!("# config: {config_json}\n").as_bytes());
    Ok(bytes)
}

fn metric_fields(id: &str, word: &ErrorBreakdown, char: &ErrorBreakdown) -> Vec<String> {
    vec![
        id.to_owned(),
        word.reference_length.to_string(),
        word.substitutions.to_string(),
        word.deletions.to_string(),
        word.insertions.to_string(),
        format_rate(word.rate()),
        format_rate(char.rate()),
    ]
}

fn header(prefix: &[&str], suffix: &[&str]) -> Vec<String> {
    prefix
        .iter()
        .copied()
        .chain(CSV_HEADER.split(','))
        .chain(suffix.iter().copied())
        .map(str::to_owned)
        .collect()
}

fn resolved(cfg: &ExperimentConfig) -> Result<(Vec<Utterance>, Option<CharNGramLM>)> {
    cfg.validate()?;
    let utts = cfg.load_utterances()?;
    let lm = cfg.load_lm()?;
    Ok((utts, lm))
}

/// One row per utterance: metrics, top-1 transcript and its score breakdown.
pub fn decode(cfg: &ExperimentConfig) -> Result<Vec<u8>> {
    let (utts, lm) = resolved(cfg)?;
    let rows = decode_utterances(&pool()?, &utts, lm.as_ref(), cfg.beam_width, cfg.max_length, &cfg.score)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(
        &[],
        &["finished", "model_logp", "lm_logp", "coverage", "length", "score", "transcript"],
    ))?;
    for (u, d) in utts.iter().zip(&rows) {
        let b = &d.best.breakdown;
        let mut rec = metric_fields(&u.id, &d.word, &d.char);
        rec.extend([
            d.best.finished.to_string(),
            format!("{:.6}", b.model),
            format!("{:.6}", b.lm),
            b.coverage.to_string(),
            b.length.to_string(),
            format!("{:.6}", b.total),
            d.transcript.clone(),
        ]);
        w.write_record(rec)?;
    }
    finish_csv(w, &cfg.to_json_line())
}

/// Label used for aggregate rows.
pub const AGGREGATE_ID: &str = "ALL";

/// Long-format sweep: per (axis value, beam width) cell, one row per
/// utterance followed by the cell's aggregate row.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<u8>> {
    let (utts, lm) = resolved(cfg)?;
    let pool = pool()?;
    let axes = &cfg.sweep;
    let cells: Vec<(String, ScoreConfig)> = if axes.strategies.is_empty() {
        axes.temperatures
            .iter()
            .map(|&t| (t.to_string(), ScoreConfig { temperature: t, ..cfg.score.clone() }))
            .collect()
    } else {
        axes.strategies.iter().map(|s| (s.to_string(), s.apply(&cfg.score, axes))).collect()
    };
    let axis = if axes.strategies.is_empty() { "temperature" } else { "strategy" };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(&[axis, "beam_width"], &[]))?;
    for (label, score) in &cells {
        for &width in &axes.beam_widths {
            let rows = decode_utterances(&pool, &utts, lm.as_ref(), width, cfg.max_length, score)?;
            let width = width.to_string();
            for (u, d) in utts.iter().zip(&rows) {
                let mut rec = vec![label.clone(), width.clone()];
                rec.extend(metric_fields(&u.id, &d.word, &d.char));
                w.write_record(rec)?;
            }
            let pairs: Vec<(&str, &str)> = rows.iter().map(|d| (d.reference.as_str(), d.transcript.as_str())).collect();
            let report = text_report(&pairs);
            let mut rec = vec![label.clone(), width];
            rec.extend(metric_fields(AGGREGATE_ID, &report.word.aggregate, &report.char.aggregate));
            w.write_record(rec)?;
        }
    }
    finish_csv(w, &cfg.to_json_line())
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    reference: &'a Path,
    hypothesis: &'a Path,
}

/// Metrics of a hypothesis file against a reference file, line by line.
pub fn score(reference: &Path, hypothesis: &Path) -> Result<Vec<u8>> {
    let refs = read_lines(reference)?;
    let hyps = read_lines(hypothesis)?;
    ensure!(
        refs.len() == hyps.len(),
        "{} has {} lines but {} has {}",
        reference.display(),
        refs.len(),
        hypothesis.display(),
        hyps.len()
    );
    let pairs: Vec<(&str, &str)> = refs.iter().map(String::as_str).zip(hyps.iter().map(String::as_str)).collect();
    let report = text_report(&pairs);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))?;
    for (i, (word, char)) in report.word.rows.iter().zip(&report.char.rows).enumerate() {
        w.write_record(metric_fields(&(i + 1).to_string(), word, char))?;
    }
    w.write_record(metric_fields(AGGREGATE_ID, &report.word.aggregate, &report.char.aggregate))?;
    let request = serde_json::to_string(&ScoreRequest { reference, hypothesis })?;
    finish_csv(w, &request)
}
