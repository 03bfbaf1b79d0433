use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use seqdec_bench::{decode_inputs, encoded_corpus, sentence_pairs};
use seqdec_core::metrics::text_report;
use seqdec_core::{beam_search, greedy_decode, BeamConfig, CharNGramLM, LmSmoothing, ScoreConfig};

fn beam(c: &mut Criterion) {
    let inputs = decode_inputs(8);
    let mut group = c.benchmark_group("beam_search");
    group.bench_function("greedy", |b| {
        b.iter(|| {
            for m in &inputs.models {
                black_box(greedy_decode(m, 1.0, 40).unwrap());
            }
        })
    });
    for width in [1, 10, 50] {
        let cfg = BeamConfig::new(width, 40, ScoreConfig::lm_fused()).with_lm(&inputs.lm);
        group.bench_with_input(BenchmarkId::new("lm_fused", width), &cfg, |b, cfg| {
            b.iter(|| {
                for m in &inputs.models {
                    black_box(beam_search(m, cfg).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn align(c: &mut Criterion) {
    let pairs = sentence_pairs(200);
    c.bench_function("align/200_sentences", |b| b.iter(|| black_box(text_report(&pairs))));
}

fn lm(c: &mut Criterion) {
    let (vocab, corpus) = encoded_corpus(2000);
    c.bench_function("lm/train_trigram", |b| {
        b.iter(|| CharNGramLM::train(black_box(&corpus), &vocab, 3, LmSmoothing::stupid_backoff()).unwrap())
    });
    let lm = CharNGramLM::train(&corpus, &vocab, 3, LmSmoothing::stupid_backoff()).unwrap();
    c.bench_function("lm/perplexity", |b| b.iter(|| lm.perplexity(black_box(&corpus)).unwrap()));
}

criterion_group!(benches, beam, align, lm);
criterion_main!(benches);
