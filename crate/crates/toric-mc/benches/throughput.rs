//! Parallel vs sequential campaign throughput.
//!
//! The parallel path is compiled in through the default `parallel` feature;
//! the sequential baseline runs the same cells trial by trial. Compare with
//! `cargo bench -p toric-mc` (and optionally `--no-default-features` to
//! time the build without rayon at all).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use toric_mc::campaign::{derive_seed, run_campaign, CampaignConfig, Mode, ResultStore};
use toric_mc::decoder2d::run_trial;
use toric_mc::decoder3d::run_memory_simulation;

fn bench_2d_trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("decoder2d_trials");
    for &k in &[12usize, 24] {
        group.bench_with_input(BenchmarkId::new("k", k), &k, |b, &k| {
            let mut seed = 0u64;
            b.iter(|| {
                seed = seed.wrapping_add(1);
                run_trial(k, 0.04, seed)
            });
        });
    }
    group.finish();
}

fn bench_3d_rounds(c: &mut Criterion) {
    let mut group = c.benchmark_group("decoder3d_rounds");
    group.sample_size(10);
    for &k in &[10usize, 18] {
        group.bench_with_input(BenchmarkId::new("k", k), &k, |b, &k| {
            let mut seed = 0u64;
            b.iter(|| {
                seed = seed.wrapping_add(1);
                run_memory_simulation(k, 0.002, 0.001, 500, seed)
            });
        });
    }
    group.finish();
}

fn campaign_cfg(threads: usize) -> CampaignConfig {
    CampaignConfig {
        mode: Mode::TwoD,
        ks: vec![12, 18],
        ps: vec![0.02, 0.04, 0.06],
        trials: 1_000,
        master_seed: 99,
        threads,
        ..CampaignConfig::default()
    }
}

/// Same cell plan executed through run_campaign (rayon pool when the
/// `parallel` feature is on) and as a plain sequential trial loop.
fn bench_campaign_parallel_vs_sequential(c: &mut Criterion) {
    let mut group = c.benchmark_group("campaign_2d");
    group.sample_size(10);

    for &threads in &[1usize, 4, 8] {
        group.bench_with_input(
            BenchmarkId::new("run_campaign_threads", threads),
            &threads,
            |b, &threads| {
                b.iter(|| {
                    let cfg = campaign_cfg(threads);
                    let mut store = ResultStore::in_memory();
                    run_campaign(&cfg, &mut store).unwrap();
                    store.len()
                });
            },
        );
    }

    group.bench_function("sequential_loop", |b| {
        b.iter(|| {
            let cfg = campaign_cfg(1);
            let mut failures = 0u64;
            for &k in &cfg.ks {
                for pi in 0..cfg.ps.len() {
                    for t in 0..cfg.trials {
                        let seed = derive_seed(cfg.master_seed, Mode::TwoD, k, pi, t);
                        failures += run_trial(k, cfg.ps[pi], seed) as u64;
                    }
                }
            }
            failures
        });
    });

    group.finish();
}

criterion_group!(
    benches,
    bench_2d_trials,
    bench_3d_rounds,
    bench_campaign_parallel_vs_sequential
);
criterion_main!(benches);
