use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use entlm_core::decode::{decode_dataset, Decoder};
use entlm_core::exec::Strategy;
use entlm_core::labelwords::{
    build_label_word_map, count_data_frequencies_with, count_lm_topk_with, LabelWordMode, SearchConfig,
};
use entlm_core::pipeline::{build_benchmark, packaged_gazetteer, run_search, BenchmarkConfig};
use entlm_core::tinylm::{ModelConfig, TinyMlm};

fn strategies() -> Vec<(&'static str, Strategy)> {
    vec![
        ("sequential", Strategy::Sequential),
        #[cfg(feature = "parallel")]
        ("parallel", Strategy::Parallel),
    ]
}

fn bench(c: &mut Criterion) {
    let cfg = BenchmarkConfig {
        unlabeled_sentences: 400,
        train_sentences: 10,
        test_sentences: 200,
        ..Default::default()
    };
    let bench = build_benchmark(&packaged_gazetteer(), &cfg).unwrap();
    let model = TinyMlm::new(ModelConfig::with_vocab(bench.vocab.len())).unwrap();
    let search = run_search(&model, &bench, &SearchConfig::default()).unwrap();
    let map = build_label_word_map(
        &bench.test.label_set,
        &bench.vocab,
        &search.selections,
        LabelWordMode::Discrete,
        &model,
    )
    .unwrap();

    let mut g = c.benchmark_group("data_frequencies");
    for (name, s) in strategies() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &s, |b, &s| {
            b.iter(|| count_data_frequencies_with(&bench.annotated, s))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("lm_topk");
    g.sample_size(10);
    for (name, s) in strategies() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &s, |b, &s| {
            b.iter(|| count_lm_topk_with(&model, &bench.vocab, &bench.annotated, 6, s).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("decode_dataset");
    g.sample_size(10);
    for (name, s) in strategies() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &s, |b, &s| {
            b.iter(|| decode_dataset(&model, &bench.vocab, &map, &Decoder::Greedy, &bench.test, s).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
