//! Parallel vs sequential execution of the data-parallel hot paths.
//!
//! Each workload runs on rayon's default pool and on a one-thread pool. Build
//! with `--no-default-features` to bench the plain sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use titan_core::ego::{ego_loss_on, ego_samples, EgoConfig, EgoNetwork};
use titan_core::fol::{fol_loss_on, fol_samples, ActionSource, FolConfig, FolNetwork};
use titan_core::synth::{generate_clip, GeneratorConfig};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
    ]
}

fn bench(c: &mut Criterion) {
    let config = GeneratorConfig {
        num_clips: 28,
        clip_length: 45,
        ..Default::default()
    };
    let clips: Vec<_> = (0..config.num_clips).map(|i| generate_clip(&config, i)).collect();
    let fol = fol_samples(&clips, 5, ActionSource::GroundTruth);
    let ego = ego_samples(&clips, 5, ActionSource::GroundTruth);
    let fol_net = FolNetwork::new(
        FolConfig {
            hidden: 64,
            ..Default::default()
        },
        0,
    );
    let ego_net = EgoNetwork::new(
        EgoConfig {
            hidden: 64,
            ..Default::default()
        },
        0,
    );

    let mut group = c.benchmark_group("hot_paths");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_with_input(BenchmarkId::new("fol_forecast_nll", name), &fol, |b, s| {
            b.iter(|| pool.install(|| fol_loss_on(&fol_net, s).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("ego_nll", name), &ego, |b, s| {
            b.iter(|| pool.install(|| ego_loss_on(&ego_net, s).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("window_extraction", name), &clips, |b, clips| {
            b.iter(|| pool.install(|| fol_samples(clips, 5, ActionSource::GroundTruth).len()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
