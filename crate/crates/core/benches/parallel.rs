use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evbattery::data::{ChargingSnippet, HealthLabel};
use evbattery::detectors::{dyad_train, DyadConfig};
use evbattery::exec::Execution;
use evbattery::synthgen::{generate_fleet_with, GenConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn small_fleet() -> GenConfig {
    GenConfig {
        n_normal: 6,
        n_anomalous: 2,
        snippets_per_vehicle: Some(64),
        ..GenConfig::default()
    }
}

fn one_epoch() -> DyadConfig {
    let mut cfg = DyadConfig::default();
    cfg.train.epochs = 1;
    cfg
}

fn bench_generate(c: &mut Criterion) {
    let mut g = c.benchmark_group("generate_fleet");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| generate_fleet_with(&small_fleet(), exec).unwrap())
        });
    }
    g.finish();
}

fn bench_dyad(c: &mut Criterion) {
    let fleet = generate_fleet_with(&small_fleet(), Execution::Sequential).unwrap();
    let vehicles: Vec<_> = fleet.vehicles.iter().filter(|v| v.health_label == HealthLabel::Normal).collect();
    let cfg = one_epoch();
    let mut g = c.benchmark_group("dyad_train_epoch");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| dyad_train(&vehicles, &cfg, 7, exec).unwrap())
        });
    }
    g.finish();

    let model = dyad_train(&vehicles, &cfg, 7, Execution::Sequential).unwrap();
    let snippets: Vec<ChargingSnippet> = fleet.vehicles.iter().flat_map(|v| v.snippets.iter().cloned()).collect();
    let mut g = c.benchmark_group("dyad_score");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.score_snippets(&snippets, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_generate, bench_dyad);
criterion_main!(benches);
