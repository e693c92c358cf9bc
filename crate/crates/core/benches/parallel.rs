//! Parallel versus sequential execution of the data-parallel hot paths.
//!
//! Build with `--no-default-features` to measure the sequential fallback
//! for both variants.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use uavmec::env::EnvConfig;
use uavmec::exec::{map_range, Execution};
use uavmec::model::generate_scenario;
use uavmec::oracle::{brute_force, greedy_policy, TinyLimits};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn exhaustive_search(c: &mut Criterion) {
    let inst = generate_scenario(1, "tiny").unwrap();
    let cfg = EnvConfig {
        resample_tasks: false,
        ..EnvConfig::default()
    };
    let limits = TinyLimits::default();
    let mut g = c.benchmark_group("brute_force");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| brute_force(black_box(&inst), &cfg, &limits, exec).unwrap().value)
        });
    }
    g.finish();
}

fn episode_batch(c: &mut Criterion) {
    let inst = Arc::new(generate_scenario(1, "paper").unwrap());
    let cfg = EnvConfig::default();
    let mut g = c.benchmark_group("greedy_episodes_x8");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                map_range(exec, 8, |s| greedy_policy(inst.clone(), &cfg, s as u64).unwrap().objective.total)
            })
        });
    }
    g.finish();
}

criterion_group!(benches, exhaustive_search, episode_batch);
criterion_main!(benches);
