use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use divlex::chargegraph::{build_graph, ReversalMatrix};
use divlex::corpus::{generate_synthetic, GeneratorConfig};
use divlex::features::{FeatureConfig, FeatureExtractor, FeatureStore};
use divlex::predictor::KeywordPredictor;
use divlex::ranker::{build_training_set, RewardSpec};
use divlex::textsim::HashEmbedder;
use divlex::Exec;

fn pipeline(c: &mut Criterion) {
    let cfg = GeneratorConfig { train_queries: 20, test_queries: 4, ..Default::default() };
    let ds = generate_synthetic(&cfg, 1).unwrap();
    let g = ReversalMatrix::from_reversals(ds.vocab.len(), &ds.reversals).unwrap();
    let graph = build_graph(&g, 0.4).unwrap();
    let emb = HashEmbedder::default();
    let pred = KeywordPredictor::new(&ds.vocab);
    let ex = FeatureExtractor { provider: &emb, predictor: &pred, graph: &graph, config: FeatureConfig::default() };
    let spec = RewardSpec::default();

    let mut group = c.benchmark_group("features");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| FeatureStore::build(&ds, &ex, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("labels");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| build_training_set(&ds, &ds.split.train, 2000, spec, 7, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
