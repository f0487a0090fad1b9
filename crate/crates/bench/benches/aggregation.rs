//! Weighted tree sampling over many silos.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedrf_benches::synthetic;
use fedrf_core::aggregation::aggregate_detailed;
use fedrf_core::{fit_forest, resolve_weights, ClientWeights, ForestParams};

fn aggregation(c: &mut Criterion) {
    let data = synthetic(200, 5, 1);
    let forest = fit_forest(&data, &ForestParams::with_estimators(1000, 1)).unwrap();
    let mut group = c.benchmark_group("aggregate");
    for silos in [3, 10, 30] {
        let forests: Vec<_> = (0..silos)
            .map(|i| (format!("s{i}"), forest.clone()))
            .collect();
        let ids: Vec<String> = forests.iter().map(|f| f.0.clone()).collect();
        let weights = resolve_weights(&ClientWeights::absent(ids.clone()), &ids).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(silos), &forests, |b, f| {
            b.iter(|| aggregate_detailed(f, &weights, 9).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, aggregation);
criterion_main!(benches);
