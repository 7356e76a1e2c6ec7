//! Stage timings under a one-thread pool and the full pool. Built with
//! `--no-default-features` the same benches measure the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use atc_lifecycle::config::RunConfig;
use atc_lifecycle::nn::train::{train, TrainConfig};
use atc_lifecycle::pipeline::{self, Inputs};
use atc_lifecycle::synth::generate_scenario;
use atc_lifecycle::workload::{intervals_from_predictions, workload_report};

fn pools() -> Vec<(String, Option<usize>)> {
    if cfg!(feature = "parallel") {
        let n = std::thread::available_parallelism().map_or(1, |n| n.get());
        let mut v = vec![("pool1".to_string(), Some(1))];
        if n > 1 {
            v.push((format!("pool{n}"), Some(n)));
        }
        v
    } else {
        vec![("sequential".into(), None)]
    }
}

fn with_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        return rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f);
    }
    let _ = threads;
    f()
}

fn stages(c: &mut Criterion) {
    let mut cfg = RunConfig::default();
    cfg.synth.n_flights = 60;
    cfg.train.epochs = 1;
    let cfg = cfg.resolved().unwrap();
    let sc = generate_scenario(&cfg.synth).unwrap();
    let inputs = Inputs::from_scenario(&sc, &cfg);
    let det = pipeline::detect(&inputs.trajectories, &cfg).unwrap();
    let (cmds, _) = pipeline::parse(&inputs.transcript, &inputs.callsigns, &cfg).unwrap();
    let (_, ds) = pipeline::build(&cmds, &det.events, &inputs.trajectories, &inputs.ctx, &cfg).unwrap();
    let (_, ens) = pipeline::train_ensemble(&ds, &cfg).unwrap();
    let rows = pipeline::predict(&ens, &ds, None).unwrap();
    let (ivs, _) = intervals_from_predictions(&rows).unwrap();
    let span = atc_lifecycle::workload::span_of(&ivs, 10.0);

    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    for (name, threads) in pools() {
        g.bench_with_input(BenchmarkId::new("detect", &name), &threads, |b, &t| {
            b.iter(|| with_pool(t, || pipeline::detect(&inputs.trajectories, &cfg).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("build_dataset", &name), &threads, |b, &t| {
            b.iter(|| with_pool(t, || pipeline::build(&cmds, &det.events, &inputs.trajectories, &inputs.ctx, &cfg).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("train_epoch", &name), &threads, |b, &t| {
            let tcfg = TrainConfig { epochs: 1, ..cfg.train.clone() };
            b.iter(|| with_pool(t, || train(&ds, &cfg.model, &tcfg).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("ensemble_predict", &name), &threads, |b, &t| {
            b.iter(|| with_pool(t, || pipeline::predict(&ens, &ds, None).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("workload_10s", &name), &threads, |b, &t| {
            b.iter(|| with_pool(t, || workload_report(&ivs, span, 10.0).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
