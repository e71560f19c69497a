use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use pnav_core::embedding::EmbeddingProvider;
use pnav_core::harness::{build_worlds, run_suite, SuiteConfig};
use pnav_core::orchestrator::{Policy, ScriptedPolicy};
use pnav_core::scene_gen::benchmark_suite;

fn suite(c: &mut Criterion) {
    let worlds = build_worlds(benchmark_suite(4).unwrap(), Arc::new(EmbeddingProvider::synthetic(64))).unwrap();
    let make = || Box::new(ScriptedPolicy::new()) as Box<dyn Policy>;
    let mut group = c.benchmark_group("suite_4x2");
    group.sample_size(10);
    for (name, parallel) in [("sequential", false), ("parallel", true)] {
        let cfg = SuiteConfig { seeds: 2, parallel, ..SuiteConfig::default() };
        group.bench_function(name, |b| b.iter(|| black_box(run_suite(&worlds, &cfg, None, &make).unwrap().report.overall())));
    }
    group.finish();
}

criterion_group!(benches, suite);
criterion_main!(benches);
